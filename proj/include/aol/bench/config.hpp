#pragma once

#include <CLI11.hpp>

#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "aol/envs.hpp"
#include "aol/errors.hpp"

namespace aol::bench {

enum class experiment_kind { episodes, bounds };
enum class comparison { topology, skip, none };
enum class solver_kind { sparse_pft, pomcp, exact };
enum class environment_kind { beacon, reduced_beacon, tunnel };

struct SolverSettings {
  solver_kind kind = solver_kind::sparse_pft;
  int num_particles = 16;
  int num_observations = 16;
  int horizon = 3;
  int max_refinements = 16;
  double slack = 0.0;
  int batch = 0;  ///< nodes per refinement, 0 = whole shallowest layer
  double ucb_c = 1.0;
  double pw_k = 100.0;
  double pw_alpha = 1.0;
  int nodes_per_transition = 1;
  long simulations = 1000;
  double budget_ms = 0.0;  ///< wall-clock budget for pomcp; 0 uses the simulation count
};

struct SkipSettings {
  bool enabled = false;
  int m = 4;
  int k = 1;
  solver_kind evaluator = solver_kind::exact;  ///< exact or sparse_pft
  double execution_ms = 0.0;
};

struct ExperimentConfig {
  std::string name = "experiment";
  experiment_kind kind = experiment_kind::episodes;
  comparison compare = comparison::topology;
  environment_kind env_kind = environment_kind::reduced_beacon;
  GridWorldSpec env;
  SolverSettings solver;
  SkipSettings skip;
  int steps = 10;
  std::vector<std::uint64_t> seeds{0};
  int workers = 1;
  std::string out_dir = "results";
  bool timing_in_traces = false;  ///< off keeps traces byte-identical across runs

  void validate() const {
    if (seeds.empty()) throw contract_violation("config: seed list must not be empty");
    if (steps <= 0) throw contract_violation("config: episodes.steps must be positive");
    if (workers <= 0) throw contract_violation("config: run.workers must be positive");
    if (solver.num_particles <= 0 || solver.num_observations <= 0)
      throw contract_violation("config: solver.N and solver.NO must be positive");
    if (solver.horizon <= 0) throw contract_violation("config: solver.horizon must be positive");
    if (solver.kind == solver_kind::pomcp && solver.simulations <= 0 && solver.budget_ms <= 0.0)
      throw contract_violation("config: pomcp needs solver.simulations or solver.budget_ms");
    if (skip.enabled && skip.k < 1) throw contract_violation("config: skip.k must be at least 1");
    if (skip.k > solver.horizon) throw contract_violation("config: skip.k must not exceed the horizon");
    if (compare == comparison::skip && !skip.enabled)
      throw contract_violation("config: experiment.compare = skip needs skip.enabled = true");
    env.validate();
  }
};

namespace detail {

inline std::string trim(std::string s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return {};
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, sep)) {
    part = trim(part);
    if (!part.empty()) out.push_back(part);
  }
  return out;
}

}  // namespace detail

/// Flat key/value view of a configuration document. Keys are dotted
/// (`environment.width`); `[section]` headers prefix the keys that follow.
class ConfigDocument {
 public:
  static ConfigDocument parse(std::istream& is) {
    ConfigDocument doc;
    std::vector<CLI::ConfigItem> items;
    try {
      items = CLI::ConfigTOML().from_config(is);
    } catch (const std::exception& e) {
      throw parse_error(std::string("config: ") + e.what());
    }
    for (const auto& it : items) {
      if (it.name == "++" || it.name == "--") continue;
      std::string key;
      for (const auto& p : it.parents)
        if (p != "default") key += p + ".";
      key += it.name;
      std::string value;
      for (std::size_t i = 0; i < it.inputs.size(); ++i) value += (i ? "," : "") + it.inputs[i];
      if (!doc.values_.emplace(key, value).second) throw parse_error("config: duplicate key '" + key + "'");
    }
    return doc;
  }

  static ConfigDocument load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw parse_error("config: cannot open '" + path + "'");
    return parse(is);
  }

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::optional<std::string> get(const std::string& key) const {
    used_.insert(key);
    auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    return it->second;
  }

  template <class T>
  void read(const std::string& key, T& out) const {
    auto v = get(key);
    if (!v) return;
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (*v == "true" || *v == "1") out = true;
        else if (*v == "false" || *v == "0") out = false;
        else throw std::invalid_argument("not a boolean");
      } else if constexpr (std::is_same_v<T, std::string>) {
        out = *v;
      } else if constexpr (std::is_floating_point_v<T>) {
        std::size_t n = 0;
        out = static_cast<T>(std::stod(*v, &n));
        if (n != v->size()) throw std::invalid_argument("trailing characters");
      } else {
        std::size_t n = 0;
        long long x = std::stoll(*v, &n);
        if (n != v->size()) throw std::invalid_argument("trailing characters");
        out = static_cast<T>(x);
      }
    } catch (const std::exception& e) {
      throw parse_error("config: bad value for '" + key + "': '" + *v + "' (" + e.what() + ")");
    }
  }

  /// Keys present in the document that no reader asked for.
  std::vector<std::string> unused() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : values_)
      if (!used_.count(k)) out.push_back(k);
    return out;
  }

 private:
  std::map<std::string, std::string> values_;
  mutable std::set<std::string> used_;
};

/// "1,2,5" or "1..20" (inclusive) or a mix: "0..3,10".
inline std::vector<std::uint64_t> parse_seed_list(const std::string& s) {
  std::vector<std::uint64_t> out;
  for (const auto& part : detail::split(s, ',')) {
    auto dots = part.find("..");
    try {
      if (dots == std::string::npos) {
        out.push_back(std::stoull(part));
      } else {
        auto a = std::stoull(part.substr(0, dots)), b = std::stoull(part.substr(dots + 2));
        if (b < a) throw std::invalid_argument("empty range");
        for (auto x = a; x <= b; ++x) out.push_back(x);
      }
    } catch (const std::exception&) {
      throw parse_error("config: bad seed list entry '" + part + "'");
    }
  }
  return out;
}

/// "x:y" pairs separated by ';' or ','.
inline std::vector<Cell> parse_cells(const std::string& s) {
  std::vector<Cell> out;
  std::string norm = s;
  for (auto& c : norm)
    if (c == ';') c = ',';
  for (const auto& part : detail::split(norm, ',')) {
    auto colon = part.find(':');
    if (colon == std::string::npos) throw parse_error("config: cell '" + part + "' is not x:y");
    try {
      out.push_back({std::stoi(part.substr(0, colon)), std::stoi(part.substr(colon + 1))});
    } catch (const std::exception&) {
      throw parse_error("config: cell '" + part + "' is not x:y");
    }
  }
  return out;
}

inline std::string format_cells(const std::vector<Cell>& cells) {
  std::string out;
  for (std::size_t i = 0; i < cells.size(); ++i) out += (i ? ";" : "") + std::to_string(cells[i].x) + ":" + std::to_string(cells[i].y);
  return out;
}

namespace detail {

template <class E>
E pick(const ConfigDocument& doc, const std::string& key, E current, std::initializer_list<std::pair<const char*, E>> names) {
  auto v = doc.get(key);
  if (!v) return current;
  for (const auto& [n, e] : names)
    if (*v == n) return e;
  std::string allowed;
  for (const auto& [n, e] : names) allowed += std::string(allowed.empty() ? "" : ", ") + n;
  throw parse_error("config: '" + key + "' must be one of " + allowed + " (got '" + *v + "')");
}

}  // namespace detail

inline const char* to_string(solver_kind k) {
  switch (k) {
    case solver_kind::sparse_pft: return "sparse_pft";
    case solver_kind::pomcp: return "pomcp";
    case solver_kind::exact: return "exact";
  }
  return "?";
}

inline const char* to_string(comparison c) {
  switch (c) {
    case comparison::topology: return "topology";
    case comparison::skip: return "skip";
    case comparison::none: return "none";
  }
  return "?";
}

inline const char* to_string(environment_kind k) {
  switch (k) {
    case environment_kind::beacon: return "beacon";
    case environment_kind::reduced_beacon: return "reduced_beacon";
    case environment_kind::tunnel: return "tunnel";
  }
  return "?";
}

/// Builds a validated configuration. Unknown keys are an error so that typos
/// do not silently fall back to defaults.
inline ExperimentConfig make_config(const ConfigDocument& doc) {
  ExperimentConfig c;
  doc.read("experiment.name", c.name);
  c.kind = detail::pick(doc, "experiment.kind", c.kind,
                        {{"episodes", experiment_kind::episodes}, {"bounds", experiment_kind::bounds}});
  c.compare = detail::pick(doc, "experiment.compare", c.compare,
                           {{"topology", comparison::topology}, {"skip", comparison::skip}, {"none", comparison::none}});

  c.env_kind = detail::pick(doc, "environment.kind", c.env_kind,
                            {{"beacon", environment_kind::beacon},
                             {"reduced_beacon", environment_kind::reduced_beacon},
                             {"tunnel", environment_kind::tunnel}});
  int length = 12;
  doc.read("environment.length", length);
  switch (c.env_kind) {
    case environment_kind::beacon: c.env = GridWorldSpec{}; break;
    case environment_kind::reduced_beacon: c.env = reduced_beacon_spec(); break;
    case environment_kind::tunnel: c.env = tunnel_spec(length); break;
  }
  auto& e = c.env;
  doc.read("environment.width", e.width);
  doc.read("environment.height", e.height);
  if (auto v = doc.get("environment.start")) e.start = parse_cells(*v).at(0);
  if (auto v = doc.get("environment.goal")) e.goal = parse_cells(*v).at(0);
  if (auto v = doc.get("environment.beacons")) e.beacons = parse_cells(*v);
  if (auto v = doc.get("environment.obstacles")) e.obstacles = parse_cells(*v);
  doc.read("environment.p_intended", e.p_intended);
  doc.read("environment.p_adjacent", e.p_adjacent);
  doc.read("environment.p_stay", e.p_stay);
  doc.read("environment.r_goal", e.r_goal);
  doc.read("environment.r_obstacle", e.r_obstacle);
  doc.read("environment.r_step", e.r_step);
  doc.read("environment.distance_scale", e.distance_scale);
  doc.read("environment.reward_offset", e.reward_offset);
  e.error_model = detail::pick(doc, "environment.error_model", e.error_model,
                               {{"clamped", obs_error_model::clamped},
                                {"paper", obs_error_model::paper},
                                {"constant", obs_error_model::constant}});
  doc.read("environment.error_slope", e.error_slope);
  doc.read("environment.error_floor", e.error_floor);
  doc.read("environment.error_cap", e.error_cap);
  doc.read("environment.beacon_range", e.beacon_range);
  doc.read("environment.horizon", e.horizon);

  auto& s = c.solver;
  s.kind = detail::pick(doc, "solver.kind", s.kind,
                        {{"sparse_pft", solver_kind::sparse_pft}, {"pomcp", solver_kind::pomcp}, {"exact", solver_kind::exact}});
  s.horizon = e.horizon;
  doc.read("solver.horizon", s.horizon);
  doc.read("solver.N", s.num_particles);
  doc.read("solver.NO", s.num_observations);
  doc.read("solver.max_refinements", s.max_refinements);
  doc.read("solver.slack", s.slack);
  doc.read("solver.batch", s.batch);
  doc.read("solver.ucb_c", s.ucb_c);
  doc.read("solver.pw_k", s.pw_k);
  doc.read("solver.pw_alpha", s.pw_alpha);
  doc.read("solver.m", s.nodes_per_transition);
  doc.read("solver.simulations", s.simulations);
  doc.read("solver.budget_ms", s.budget_ms);

  doc.read("skip.enabled", c.skip.enabled);
  doc.read("skip.m", c.skip.m);
  doc.read("skip.k", c.skip.k);
  c.skip.evaluator = detail::pick(doc, "skip.evaluator", c.skip.evaluator,
                                  {{"exact", solver_kind::exact}, {"sparse_pft", solver_kind::sparse_pft}});
  doc.read("skip.execution_ms", c.skip.execution_ms);

  doc.read("episodes.steps", c.steps);
  if (auto v = doc.get("seeds")) c.seeds = parse_seed_list(*v);
  doc.read("run.workers", c.workers);
  doc.read("output.dir", c.out_dir);
  doc.read("output.timing", c.timing_in_traces);

  if (auto unused = doc.unused(); !unused.empty()) {
    std::string keys;
    for (const auto& k : unused) keys += (keys.empty() ? "" : ", ") + k;
    throw parse_error("config: unknown keys: " + keys);
  }
  c.validate();
  return c;
}

inline ExperimentConfig load_config(const std::string& path) { return make_config(ConfigDocument::load(path)); }

}  // namespace aol::bench
