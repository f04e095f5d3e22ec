#pragma once

#include <json.hpp>

#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <future>
#include <limits>
#include <mutex>
#include <numeric>
#include <string>
#include <vector>

#include "aol/bench/config.hpp"
#include "aol/bounds.hpp"
#include "aol/envs.hpp"
#include "aol/exact_oracle.hpp"
#include "aol/format.hpp"
#include "aol/pomcp.hpp"
#include "aol/rng.hpp"
#include "aol/skip_replan.hpp"
#include "aol/sparse_pft.hpp"

namespace aol::bench {

enum class variant { treatment, baseline };

inline const char* to_string(variant v) { return v == variant::treatment ? "treatment" : "baseline"; }

struct SeedOutcome {
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  EpisodeResult episode;
};

struct Stats {
  double mean = std::numeric_limits<double>::quiet_NaN();
  double std = std::numeric_limits<double>::quiet_NaN();  ///< sample standard deviation
  bool std_defined = false;
  std::size_t n = 0;
};

inline Stats describe(const std::vector<double>& xs) {
  Stats s;
  s.n = xs.size();
  if (xs.empty()) return s;
  s.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  if (xs.size() < 2) return s;
  double ss = 0.0;
  for (double x : xs) ss += (x - s.mean) * (x - s.mean);
  s.std = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  s.std_defined = true;
  return s;
}

/// sqrt((s_a^2 + s_b^2) / 2)
inline double pooled_std(const Stats& a, const Stats& b) {
  if (!a.std_defined || !b.std_defined) return std::numeric_limits<double>::quiet_NaN();
  return std::sqrt((a.std * a.std + b.std * b.std) / 2.0);
}

struct VariantSummary {
  std::string label;
  std::vector<SeedOutcome> runs;
  std::vector<double> returns;  ///< successful seeds, in seed order
  Stats return_stats;
  double planning_time = 0.0;  ///< seconds, summed over successful seeds
  double mean_planning_time_per_step = 0.0;
  double srg_time = 0.0;
  int steps = 0;
  int skipped = 0;
  int plans = 0;
  int unguaranteed_plans = 0;
  int refinements = 0;
  int late_certificates = 0;
  bool empirical_skips = false;

  double skip_ratio() const { return steps ? static_cast<double>(skipped) / steps : 0.0; }
  int failures() const {
    int n = 0;
    for (const auto& r : runs) n += !r.ok;
    return n;
  }
};

struct RunSummary {
  ExperimentConfig config;
  VariantSummary treatment;
  std::optional<VariantSummary> baseline;
  double speedup = std::numeric_limits<double>::quiet_NaN();  ///< baseline runtime / treatment runtime
  double mean_return_difference = std::numeric_limits<double>::quiet_NaN();  ///< treatment - baseline, paired
  double pooled_std = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::string> trace_files;
};

// ---------------------------------------------------------------------------
// Planners
// ---------------------------------------------------------------------------

/// Stateful planner for one episode: its random streams advance with the
/// decision count, independent of the environment stream.
inline Planner make_planner(const DiscretePomdp& model, const ExperimentConfig& cfg, variant v, std::uint64_t seed) {
  const auto& s = cfg.solver;
  auto calls = std::make_shared<std::uint64_t>(0);
  auto next_seed = [seed, calls] { return derive_seed(seed, {tag(stream_tag::planner), (*calls)++}); };
  const bool treat = v == variant::treatment || cfg.compare == comparison::skip;
  PlanOptions popt;
  popt.max_refinements = s.max_refinements;
  popt.slack = s.slack;
  popt.policy = shallowest_policy(s.batch);

  switch (s.kind) {
    case solver_kind::exact:
      if (treat) return exact_guaranteed_planner(model, s.horizon, popt);
      return [&model, h = s.horizon](const ExactBelief& b) {
        auto q = ExactOracle(model).q_star_all(b, h);
        return PlanOutcome{argmax(q), true, 0};
      };
    case solver_kind::sparse_pft: {
      SparseConfig sc;
      sc.num_particles = s.num_particles;
      sc.num_observations = s.num_observations;
      sc.horizon = s.horizon;
      if (treat)
        return [&model, sc, popt, next_seed](const ExactBelief& b) mutable {
          sc.seed = next_seed();
          SparseBoundEvaluator ev(model, root_particles(b, sc), sc);
          auto r = plan_with_guarantees(ev, Topology::fully_open_loop(), popt);
          return PlanOutcome{r.action, r.guaranteed, r.refinements};
        };
      return [&model, sc, next_seed](const ExactBelief& b) mutable {
        sc.seed = next_seed();
        auto q = closed_loop_q(model, root_particles(b, sc), sc);
        return PlanOutcome{argmax(q), false, 0};
      };
    }
    case solver_kind::pomcp: {
      PomcpConfig pc;
      pc.ucb_c = s.ucb_c;
      pc.pw_k = s.pw_k;
      pc.pw_alpha = s.pw_alpha;
      pc.nodes_per_transition = s.nodes_per_transition;
      pc.horizon = s.horizon;
      pc.max_simulations = s.budget_ms > 0.0 ? 0 : s.simulations;
      pc.time_budget_ms = s.budget_ms;
      pc.adaptive = treat;
      pc.track_open_loop_fraction = false;
      pc.initial_topology = treat ? Topology::fully_open_loop() : Topology::fully_closed_loop();
      return [&model, pc, next_seed](const ExactBelief& b) mutable {
        pc.seed = next_seed();
        auto r = pomcp_search(model, b, pc);
        return PlanOutcome{r.action, false, r.transitions - r.identity_transitions};
      };
    }
  }
  throw contract_violation("unknown solver kind");
}

inline SkipConfig make_skip_config(const ExperimentConfig& cfg, variant v) {
  SkipConfig k;
  k.enabled = cfg.skip.enabled && (cfg.compare != comparison::skip || v == variant::treatment);
  k.max_steps = cfg.steps;
  k.srg.depth = cfg.skip.k;
  k.srg.allowed_count = cfg.skip.m;
  k.srg.horizon = cfg.solver.horizon;
  k.srg.slack = cfg.solver.slack;
  k.srg.empirical = cfg.skip.evaluator != solver_kind::exact;
  k.execution_time = cfg.skip.execution_ms / 1000.0;
  return k;
}

inline ContinuationFn make_continuation(const DiscretePomdp& model, const ExperimentConfig& cfg, std::uint64_t seed) {
  if (cfg.skip.evaluator == solver_kind::exact) return exact_continuation(model);
  SparseConfig sc;
  sc.num_particles = cfg.solver.num_particles;
  sc.num_observations = cfg.solver.num_observations;
  sc.seed = derive_seed(seed, {tag(stream_tag::topology)});
  return sparse_continuation(model, sc);
}

inline DiscretePomdp build_model(const ExperimentConfig& cfg) {
  return cfg.env_kind == environment_kind::tunnel ? build_tunnel_pomdp(cfg.env) : build_beacon_pomdp(cfg.env);
}

/// One episode of one variant. The environment stream depends on the seed
/// only, so both variants of a seed see the same noise for the same actions.
inline SeedOutcome run_episode(const DiscretePomdp& model, const ExperimentConfig& cfg, variant v, std::uint64_t seed) {
  SeedOutcome out;
  out.seed = seed;
  try {
    auto env = make_environment(model, cfg.env, cfg.steps, seed);
    auto planner = make_planner(model, cfg, v, seed);
    out.episode = execute_with_skipping(model, env, planner, make_skip_config(cfg, v), make_continuation(model, cfg, seed));
    out.ok = true;
  } catch (const std::exception& e) {
    out.error = e.what();
  }
  return out;
}

inline VariantSummary summarize(std::string label, std::vector<SeedOutcome> runs) {
  VariantSummary s;
  s.label = std::move(label);
  s.runs = std::move(runs);
  for (const auto& r : s.runs) {
    if (!r.ok) continue;
    const auto& e = r.episode;
    s.returns.push_back(e.total_reward);
    s.planning_time += e.planning_time;
    s.srg_time += e.srg_time;
    s.steps += e.steps;
    s.skipped += e.skipped;
    s.plans += e.plans;
    s.unguaranteed_plans += e.unguaranteed_plans;
    s.refinements += e.refinements;
    s.late_certificates += e.late_certificates;
    s.empirical_skips = s.empirical_skips || e.empirical_skips;
  }
  s.return_stats = describe(s.returns);
  s.mean_planning_time_per_step = s.steps ? s.planning_time / s.steps : 0.0;
  return s;
}

/// Runs `fn(seed)` for every seed on `workers` threads; results keep seed order.
template <class Fn>
auto fan_out(const std::vector<std::uint64_t>& seeds, int workers, Fn fn) {
  using R = decltype(fn(seeds[0]));
  std::vector<R> out(seeds.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < seeds.size(); i = next++) out[i] = fn(seeds[i]);
  };
  std::vector<std::future<void>> pool;
  for (int w = 1; w < workers; ++w) pool.push_back(std::async(std::launch::async, work));
  work();
  for (auto& f : pool) f.get();
  return out;
}

inline nlohmann::json to_json(const Stats& s) {
  nlohmann::json j;
  j["n"] = s.n;
  j["mean"] = fmt9(s.mean);
  j["std"] = s.std_defined ? fmt9(s.std) : "undefined";
  return j;
}

inline nlohmann::json to_json(const VariantSummary& v) {
  nlohmann::json j;
  j["label"] = v.label;
  nlohmann::json per_seed = nlohmann::json::array();
  for (const auto& r : v.runs) {
    nlohmann::json e;
    e["seed"] = r.seed;
    if (r.ok) e["return"] = fmt9(r.episode.total_reward);
    else e["error"] = r.error;
    per_seed.push_back(e);
  }
  j["seeds"] = per_seed;
  j["returns"] = to_json(v.return_stats);
  j["steps"] = v.steps;
  j["plans"] = v.plans;
  j["skipped"] = v.skipped;
  j["skip_ratio"] = fmt9(v.skip_ratio());
  j["unguaranteed_plans"] = v.unguaranteed_plans;
  j["refinements"] = v.refinements;
  j["empirical_skips"] = v.empirical_skips;
  j["failures"] = v.failures();
  j["planning_time_s"] = fmt9(v.planning_time);
  j["mean_planning_time_per_step_s"] = fmt9(v.mean_planning_time_per_step);
  j["srg_time_s"] = fmt9(v.srg_time);
  j["late_certificates"] = v.late_certificates;
  return j;
}

inline nlohmann::json config_metadata(const ExperimentConfig& c) {
  nlohmann::json j;
  j["name"] = c.name;
  j["compare"] = to_string(c.compare);
  j["environment"] = to_string(c.env_kind);
  j["width"] = c.env.width;
  j["height"] = c.env.height;
  j["obstacles"] = format_cells(c.env.obstacles);
  j["beacons"] = format_cells(c.env.beacons);
  j["observation_error_model"] = to_string(c.env.error_model);
  j["beacon_range"] = fmt9(c.env.beacon_range);
  j["beacon_range_note"] = "derived from the error cap, not given by the model description";
  j["reward_offset"] = fmt9(c.env.reward_offset);
  j["solver"] = to_string(c.solver.kind);
  j["horizon"] = c.solver.horizon;
  j["N"] = c.solver.num_particles;
  j["NO"] = c.solver.num_observations;
  j["simulations"] = c.solver.simulations;
  j["budget_ms"] = fmt9(c.solver.budget_ms);
  j["skip_enabled"] = c.skip.enabled;
  j["skip_m"] = c.skip.m;
  j["skip_k"] = c.skip.k;
  j["steps"] = c.steps;
  return j;
}

/// Paired baseline / treatment episodes on matched seeds. Failures of single
/// seeds are recorded and the run continues. Writes one trace per episode and
/// a summary document when `write` is set.
inline RunSummary run_experiment(const ExperimentConfig& cfg, bool write = true) {
  cfg.validate();
  if (cfg.kind != experiment_kind::episodes) throw contract_violation("run_experiment: not an episodes experiment");
  const DiscretePomdp model = build_model(cfg);
  RunSummary out;
  out.config = cfg;

  auto run_variant = [&](variant v) {
    return fan_out(cfg.seeds, cfg.workers, [&](std::uint64_t seed) { return run_episode(model, cfg, v, seed); });
  };
  out.treatment = summarize(to_string(variant::treatment), run_variant(variant::treatment));
  if (cfg.compare != comparison::none) out.baseline = summarize(to_string(variant::baseline), run_variant(variant::baseline));

  if (out.baseline) {
    const auto& b = *out.baseline;
    if (out.treatment.planning_time > 0.0) out.speedup = b.planning_time / out.treatment.planning_time;
    std::vector<double> diffs;
    for (std::size_t i = 0; i < cfg.seeds.size(); ++i)
      if (out.treatment.runs[i].ok && b.runs[i].ok)
        diffs.push_back(out.treatment.runs[i].episode.total_reward - b.runs[i].episode.total_reward);
    out.mean_return_difference = describe(diffs).mean;
    out.pooled_std = pooled_std(out.treatment.return_stats, b.return_stats);
  }

  if (!write) return out;
  namespace fs = std::filesystem;
  const fs::path dir = fs::path(cfg.out_dir) / cfg.name;
  fs::create_directories(dir / "traces");
  auto dump = [&](const VariantSummary& v) {
    for (const auto& r : v.runs) {
      if (!r.ok) continue;
      fs::path p = dir / "traces" / (v.label + "_seed" + std::to_string(r.seed) + ".csv");
      std::ofstream os(p);
      write_trace(os, r.episode.trace, cfg.timing_in_traces);
      out.trace_files.push_back(p.string());
    }
  };
  dump(out.treatment);
  if (out.baseline) dump(*out.baseline);

  nlohmann::json j;
  j["config"] = config_metadata(cfg);
  j["treatment"] = to_json(out.treatment);
  if (out.baseline) {
    j["baseline"] = to_json(*out.baseline);
    j["mean_return_difference"] = fmt9(out.mean_return_difference);
    j["pooled_std"] = fmt9(out.pooled_std);
    j["speedup"] = fmt9(out.speedup);
  }
  std::ofstream(dir / "summary.json") << j.dump(2) << "\n";
  return out;
}

struct BoundSample {
  std::uint64_t seed = 0;
  action_id action = 0;
  double lower = 0.0;
  double upper = 0.0;
  double baseline_q = 0.0;
};

/// Open-loop bounds and the closed-loop baseline estimate at the initial
/// belief, one sample per seed and action.
inline std::vector<BoundSample> bound_distribution(const ExperimentConfig& cfg) {
  const DiscretePomdp model = build_model(cfg);
  const ExactBelief b0 = ExactBelief::initial(model);
  auto rows = fan_out(cfg.seeds, cfg.workers, [&](std::uint64_t seed) {
    SparseConfig sc;
    sc.num_particles = cfg.solver.num_particles;
    sc.num_observations = cfg.solver.num_observations;
    sc.horizon = cfg.solver.horizon;
    sc.seed = seed;
    auto root = root_particles(b0, sc);
    auto ev = solve_root(model, root, Topology::fully_open_loop(), sc);
    auto q = closed_loop_q(model, root, sc);
    std::vector<BoundSample> out;
    for (int a = 0; a < model.num_actions(); ++a)
      out.push_back({seed, a, ev.bounds[a].lower, ev.bounds[a].upper, q[a]});
    return out;
  });
  std::vector<BoundSample> flat;
  for (auto& r : rows) flat.insert(flat.end(), r.begin(), r.end());
  return flat;
}

inline void write_bound_distribution(std::ostream& os, const std::vector<BoundSample>& rows) {
  os << "action,lb,ub,baseline_q\n";
  for (const auto& r : rows)
    os << r.action << "," << fmt9(r.lower) << "," << fmt9(r.upper) << "," << fmt9(r.baseline_q) << "\n";
}

inline std::string run_bounds_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  namespace fs = std::filesystem;
  const fs::path dir = fs::path(cfg.out_dir) / cfg.name;
  fs::create_directories(dir);
  const fs::path p = dir / "bounds.csv";
  std::ofstream os(p);
  write_bound_distribution(os, bound_distribution(cfg));
  return p.string();
}

}  // namespace aol::bench
