#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <iomanip>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "aol/errors.hpp"
#include "aol/rng.hpp"

namespace aol {

using state_id = int;
using action_id = int;
using observation_id = int;

inline constexpr double probability_tolerance = 1e-9;

/// A (index, probability) entry of a sparse distribution row.
struct weighted_index {
  int index;
  double probability;
};

/**
 * Tabular finite-horizon POMDP with state-dependent observations.
 *
 * Transition P(x'|x,a), observation P(z|x) and reward r(x,a) are stored densely.
 * Setters may be called freely; finalize() validates every row and builds the
 * sparse support lists used for enumeration and sampling. Query functions that
 * depend on those lists require a finalized model.
 */
class DiscretePomdp {
 public:
  DiscretePomdp() = default;

  DiscretePomdp(int num_states, int num_actions, int num_observations, int horizon)
      : num_states_(num_states),
        num_actions_(num_actions),
        num_observations_(num_observations),
        horizon_(horizon) {
    if (num_states <= 0 || num_actions <= 0 || num_observations <= 0 || horizon <= 0)
      throw contract_violation("DiscretePomdp: all dimensions and the horizon must be positive");
    transition_.assign(static_cast<std::size_t>(num_states) * num_actions * num_states, 0.0);
    observation_.assign(static_cast<std::size_t>(num_states) * num_observations, 0.0);
    reward_.assign(static_cast<std::size_t>(num_states) * num_actions, 0.0);
    initial_.assign(static_cast<std::size_t>(num_states), 0.0);
  }

  int num_states() const noexcept { return num_states_; }
  int num_actions() const noexcept { return num_actions_; }
  int num_observations() const noexcept { return num_observations_; }
  int horizon() const noexcept { return horizon_; }
  bool finalized() const noexcept { return finalized_; }

  void set_horizon(int horizon) {
    if (horizon <= 0) throw contract_violation("horizon must be positive");
    horizon_ = horizon;
  }

  void set_transition(state_id from, action_id a, state_id to, double p) {
    transition_.at(t_index(from, a, to)) = p;
    finalized_ = false;
  }
  void set_observation(state_id s, observation_id z, double p) {
    observation_.at(o_index(s, z)) = p;
    finalized_ = false;
  }
  void set_reward(state_id s, action_id a, double r) {
    reward_.at(r_index(s, a)) = r;
    finalized_ = false;
  }
  void set_initial_belief(std::vector<double> b) {
    if (static_cast<int>(b.size()) != num_states_)
      throw contract_violation("initial belief has wrong dimension");
    initial_ = std::move(b);
    finalized_ = false;
  }

  double transition(state_id from, action_id a, state_id to) const { return transition_[t_index(from, a, to)]; }
  double observation(state_id s, observation_id z) const { return observation_[o_index(s, z)]; }
  double reward(state_id s, action_id a) const { return reward_[r_index(s, a)]; }
  const std::vector<double>& initial_belief() const noexcept { return initial_; }

  std::span<const double> transition_row(state_id from, action_id a) const {
    return {transition_.data() + t_index(from, a, 0), static_cast<std::size_t>(num_states_)};
  }
  std::span<const double> observation_row(state_id s) const {
    return {observation_.data() + o_index(s, 0), static_cast<std::size_t>(num_observations_)};
  }

  /// Nonzero entries of P(.|x,a).
  std::span<const weighted_index> successors(state_id from, action_id a) const {
    require_finalized();
    const auto& row = successors_[static_cast<std::size_t>(from) * num_actions_ + a];
    return {row.data(), row.size()};
  }
  /// Nonzero entries of P(.|x).
  std::span<const weighted_index> emissions(state_id s) const {
    require_finalized();
    const auto& row = emissions_[static_cast<std::size_t>(s)];
    return {row.data(), row.size()};
  }

  double max_abs_reward() const noexcept {
    double m = 0.0;
    for (double r : reward_) m = std::max(m, std::abs(r));
    return m;
  }
  double min_reward() const noexcept { return *std::min_element(reward_.begin(), reward_.end()); }

  state_id sample_next_state(state_id from, action_id a, rng_engine& rng) const {
    return sample_row(successors(from, a), rng);
  }
  observation_id sample_observation(state_id s, rng_engine& rng) const { return sample_row(emissions(s), rng); }

  /// Validates every probability vector and builds support lists.
  void finalize() {
    if (num_states_ <= 0) throw contract_violation("DiscretePomdp: model is empty");
    auto check = [](std::span<const double> row, const std::string& what) {
      double sum = 0.0;
      for (double p : row) {
        if (!(p >= 0.0) || !std::isfinite(p)) throw contract_violation(what + ": negative or non-finite probability");
        sum += p;
      }
      if (std::abs(sum - 1.0) > probability_tolerance) {
        std::ostringstream os;
        os << what << ": probabilities sum to " << std::setprecision(12) << sum;
        throw contract_violation(os.str());
      }
    };
    successors_.assign(static_cast<std::size_t>(num_states_) * num_actions_, {});
    emissions_.assign(static_cast<std::size_t>(num_states_), {});
    for (int s = 0; s < num_states_; ++s) {
      for (int a = 0; a < num_actions_; ++a) {
        auto row = transition_row(s, a);
        check(row, "transition(" + std::to_string(s) + "," + std::to_string(a) + ")");
        auto& out = successors_[static_cast<std::size_t>(s) * num_actions_ + a];
        for (int t = 0; t < num_states_; ++t)
          if (row[t] > 0.0) out.push_back({t, row[t]});
      }
      auto orow = observation_row(s);
      check(orow, "observation(" + std::to_string(s) + ")");
      for (int z = 0; z < num_observations_; ++z)
        if (orow[z] > 0.0) emissions_[s].push_back({z, orow[z]});
    }
    for (double r : reward_)
      if (!std::isfinite(r)) throw contract_violation("reward must be finite");
    check(initial_, "initial belief");
    finalized_ = true;
  }

 private:
  std::size_t t_index(state_id from, action_id a, state_id to) const {
    check_state(from);
    check_action(a);
    check_state(to);
    return (static_cast<std::size_t>(from) * num_actions_ + a) * num_states_ + to;
  }
  std::size_t o_index(state_id s, observation_id z) const {
    check_state(s);
    if (z < 0 || z >= num_observations_) throw contract_violation("observation index out of range");
    return static_cast<std::size_t>(s) * num_observations_ + z;
  }
  std::size_t r_index(state_id s, action_id a) const {
    check_state(s);
    check_action(a);
    return static_cast<std::size_t>(s) * num_actions_ + a;
  }
  void check_state(state_id s) const {
    if (s < 0 || s >= num_states_) throw contract_violation("state index out of range");
  }
  void check_action(action_id a) const {
    if (a < 0 || a >= num_actions_) throw contract_violation("action index out of range");
  }
  void require_finalized() const {
    if (!finalized_) throw contract_violation("DiscretePomdp: call finalize() before querying supports");
  }
  static int sample_row(std::span<const weighted_index> row, rng_engine& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double x = u(rng);
    for (const auto& e : row) {
      x -= e.probability;
      if (x < 0.0) return e.index;
    }
    return row.back().index;
  }

  int num_states_ = 0;
  int num_actions_ = 0;
  int num_observations_ = 0;
  int horizon_ = 1;
  std::vector<double> transition_;
  std::vector<double> observation_;
  std::vector<double> reward_;
  std::vector<double> initial_;
  std::vector<std::vector<weighted_index>> successors_;
  std::vector<std::vector<weighted_index>> emissions_;
  bool finalized_ = false;
};

// ---------------------------------------------------------------------------
// Exact beliefs
// ---------------------------------------------------------------------------

struct ExactBelief {
  std::vector<double> probabilities;

  static ExactBelief point_mass(int num_states, state_id s) {
    ExactBelief b;
    b.probabilities.assign(static_cast<std::size_t>(num_states), 0.0);
    b.probabilities.at(static_cast<std::size_t>(s)) = 1.0;
    return b;
  }
  static ExactBelief initial(const DiscretePomdp& model) { return {model.initial_belief()}; }

  int size() const noexcept { return static_cast<int>(probabilities.size()); }
  double operator[](state_id s) const { return probabilities[static_cast<std::size_t>(s)]; }

  std::vector<state_id> support() const {
    std::vector<state_id> out;
    for (int s = 0; s < size(); ++s)
      if (probabilities[s] > 0.0) out.push_back(s);
    return out;
  }

  friend bool operator==(const ExactBelief&, const ExactBelief&) = default;
};

struct BayesResult {
  ExactBelief posterior;
  double predictive = 0.0;  ///< P(z | b, a)
};

inline double expected_reward(const DiscretePomdp& model, const ExactBelief& b, action_id a) {
  double r = 0.0;
  for (int s = 0; s < b.size(); ++s)
    if (b[s] > 0.0) r += b[s] * model.reward(s, a);
  return r;
}

/// Pushes a belief one step through the transition model.
inline ExactBelief propagate(const DiscretePomdp& model, const ExactBelief& b, action_id a) {
  ExactBelief out;
  out.probabilities.assign(b.probabilities.size(), 0.0);
  for (int s = 0; s < b.size(); ++s) {
    if (b[s] <= 0.0) continue;
    for (const auto& e : model.successors(s, a)) out.probabilities[e.index] += b[s] * e.probability;
  }
  return out;
}

inline ExactBelief propagate_open_loop(const DiscretePomdp& model, ExactBelief b, std::span<const action_id> actions) {
  for (action_id a : actions) b = propagate(model, b, a);
  return b;
}

/// P(z | b) for a belief over the state in which z is emitted.
inline std::vector<double> observation_distribution(const DiscretePomdp& model, const ExactBelief& b) {
  std::vector<double> pz(static_cast<std::size_t>(model.num_observations()), 0.0);
  for (int s = 0; s < b.size(); ++s) {
    if (b[s] <= 0.0) continue;
    for (const auto& e : model.emissions(s)) pz[e.index] += b[s] * e.probability;
  }
  return pz;
}

/// Conditions an already-propagated belief on an observation.
inline BayesResult condition(const DiscretePomdp& model, const ExactBelief& propagated, observation_id z) {
  BayesResult out;
  out.posterior.probabilities.assign(propagated.probabilities.size(), 0.0);
  double total = 0.0;
  for (int s = 0; s < propagated.size(); ++s) {
    double w = propagated[s] * model.observation(s, z);
    out.posterior.probabilities[s] = w;
    total += w;
  }
  if (!(total > 0.0))
    throw impossible_observation("observation " + std::to_string(z) + " has zero predictive probability");
  for (double& p : out.posterior.probabilities) p /= total;
  out.predictive = total;
  return out;
}

inline BayesResult exact_bayes_update(const DiscretePomdp& model, const ExactBelief& b, action_id a, observation_id z) {
  return condition(model, propagate(model, b, a), z);
}

/// Support of P(x_k | b, a_{0:k-1}) by forward closure over nonzero transitions.
inline std::vector<state_id> reachable_states(const DiscretePomdp& model, const ExactBelief& b,
                                              std::span<const action_id> actions) {
  std::vector<char> current(static_cast<std::size_t>(model.num_states()), 0);
  for (int s = 0; s < b.size(); ++s) current[s] = b[s] > 0.0;
  for (action_id a : actions) {
    std::vector<char> next(current.size(), 0);
    for (int s = 0; s < model.num_states(); ++s) {
      if (!current[s]) continue;
      for (const auto& e : model.successors(s, a)) next[e.index] = 1;
    }
    current.swap(next);
  }
  std::vector<state_id> out;
  for (int s = 0; s < model.num_states(); ++s)
    if (current[s]) out.push_back(s);
  return out;
}

inline double total_variation(const ExactBelief& p, const ExactBelief& q) {
  double d = 0.0;
  for (int s = 0; s < p.size(); ++s) d += std::abs(p[s] - q[s]);
  return 0.5 * d;
}

// ---------------------------------------------------------------------------
// Particle beliefs
// ---------------------------------------------------------------------------

struct Particle {
  state_id state;
  double weight;
  friend bool operator==(const Particle&, const Particle&) = default;
};

/// Weighted particle set. Weights are normalized after every update operation.
class ParticleBelief {
 public:
  ParticleBelief() = default;
  explicit ParticleBelief(std::vector<Particle> particles) : particles_(std::move(particles)) {
    if (particles_.empty()) throw contract_violation("ParticleBelief needs at least one particle");
    normalize();
  }

  /// One particle per support state, weighted by its exact probability.
  static ParticleBelief from_exact(const ExactBelief& b) {
    std::vector<Particle> ps;
    for (int s = 0; s < b.size(); ++s)
      if (b[s] > 0.0) ps.push_back({s, b[s]});
    return ParticleBelief(std::move(ps));
  }

  /// n equally weighted particles drawn i.i.d. from b.
  static ParticleBelief sample(const ExactBelief& b, int n, rng_engine& rng) {
    if (n <= 0) throw contract_violation("particle count must be positive");
    std::discrete_distribution<int> d(b.probabilities.begin(), b.probabilities.end());
    std::vector<Particle> ps;
    ps.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) ps.push_back({d(rng), 1.0 / n});
    return ParticleBelief(std::move(ps));
  }

  static ParticleBelief point(state_id s) { return ParticleBelief({Particle{s, 1.0}}); }

  std::span<const Particle> particles() const noexcept { return particles_; }
  std::size_t size() const noexcept { return particles_.size(); }

  double total_weight() const noexcept {
    double w = 0.0;
    for (const auto& p : particles_) w += p.weight;
    return w;
  }

  void normalize() {
    double w = total_weight();
    if (!(w > 0.0)) throw particle_depletion("particle weights sum to zero");
    for (auto& p : particles_) p.weight /= w;
  }

  std::size_t sample_index(rng_engine& rng) const {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double x = u(rng) * total_weight();
    for (std::size_t i = 0; i < particles_.size(); ++i) {
      x -= particles_[i].weight;
      if (x < 0.0) return i;
    }
    return particles_.size() - 1;
  }

  double expected_reward(const DiscretePomdp& model, action_id a) const {
    double r = 0.0;
    for (const auto& p : particles_) r += p.weight * model.reward(p.state, a);
    return r;
  }

  ExactBelief to_exact(int num_states) const {
    ExactBelief b;
    b.probabilities.assign(static_cast<std::size_t>(num_states), 0.0);
    for (const auto& p : particles_) b.probabilities.at(static_cast<std::size_t>(p.state)) += p.weight;
    double w = total_weight();
    for (double& v : b.probabilities) v /= w;
    return b;
  }

  friend bool operator==(const ParticleBelief&, const ParticleBelief&) = default;

 private:
  std::vector<Particle> particles_;
};

/// Sequential importance step: sample x' ~ P_T for every particle, reweight by P(z|x'),
/// normalize. Throws particle_depletion when no particle explains the observation.
inline ParticleBelief particle_update(const DiscretePomdp& model, const ParticleBelief& belief, action_id a,
                                      observation_id z, rng_engine& rng) {
  if (!(belief.total_weight() > 0.0)) throw contract_violation("particle_update on a degenerate belief");
  std::vector<Particle> next;
  next.reserve(belief.size());
  double total = 0.0;
  for (const auto& p : belief.particles()) {
    state_id s2 = model.sample_next_state(p.state, a, rng);
    double w = p.weight * model.observation(s2, z);
    total += w;
    next.push_back({s2, w});
  }
  if (!(total > 0.0))
    throw particle_depletion("particle depletion: observation " + std::to_string(z) +
                             " is impossible for every propagated particle");
  return ParticleBelief(std::move(next));
}

// ---------------------------------------------------------------------------
// Text serialization
// ---------------------------------------------------------------------------

/// Writes the model as a line-oriented document; only nonzero entries are listed.
inline void write_model(std::ostream& os, const DiscretePomdp& m) {
  os << std::setprecision(std::numeric_limits<double>::max_digits10);
  os << "states " << m.num_states() << "\n";
  os << "actions " << m.num_actions() << "\n";
  os << "observations " << m.num_observations() << "\n";
  os << "horizon " << m.horizon() << "\n";
  for (int s = 0; s < m.num_states(); ++s)
    for (int a = 0; a < m.num_actions(); ++a)
      for (int t = 0; t < m.num_states(); ++t)
        if (m.transition(s, a, t) != 0.0) os << "transition " << s << " " << a << " " << t << " " << m.transition(s, a, t) << "\n";
  for (int s = 0; s < m.num_states(); ++s)
    for (int z = 0; z < m.num_observations(); ++z)
      if (m.observation(s, z) != 0.0) os << "observation " << s << " " << z << " " << m.observation(s, z) << "\n";
  for (int s = 0; s < m.num_states(); ++s)
    for (int a = 0; a < m.num_actions(); ++a)
      if (m.reward(s, a) != 0.0) os << "reward " << s << " " << a << " " << m.reward(s, a) << "\n";
  os << "initial";
  for (double p : m.initial_belief()) os << " " << p;
  os << "\n";
}

inline DiscretePomdp read_model(std::istream& is) {
  int ns = 0, na = 0, nz = 0, horizon = 0;
  std::vector<std::pair<int, std::string>> body;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key)) continue;
    auto read_int = [&](int& dst) {
      if (!(ls >> dst)) throw parse_error("model line " + std::to_string(line_no) + ": expected integer after " + key);
    };
    if (key == "states") read_int(ns);
    else if (key == "actions") read_int(na);
    else if (key == "observations") read_int(nz);
    else if (key == "horizon") read_int(horizon);
    else body.emplace_back(line_no, line);
  }
  DiscretePomdp m(ns, na, nz, horizon);
  for (const auto& [no, text] : body) {
    std::istringstream ls(text);
    std::string key;
    ls >> key;
    auto fail = [&, no = no] { throw parse_error("model line " + std::to_string(no) + ": malformed '" + key + "' entry"); };
    if (key == "transition") {
      int s, a, t;
      double p;
      if (!(ls >> s >> a >> t >> p)) fail();
      m.set_transition(s, a, t, p);
    } else if (key == "observation") {
      int s, z;
      double p;
      if (!(ls >> s >> z >> p)) fail();
      m.set_observation(s, z, p);
    } else if (key == "reward") {
      int s, a;
      double r;
      if (!(ls >> s >> a >> r)) fail();
      m.set_reward(s, a, r);
    } else if (key == "initial") {
      std::vector<double> b;
      double p;
      while (ls >> p) b.push_back(p);
      if (static_cast<int>(b.size()) != ns) fail();
      m.set_initial_belief(std::move(b));
    } else {
      throw parse_error("model line " + std::to_string(no) + ": unknown key '" + key + "'");
    }
  }
  m.finalize();
  return m;
}

}  // namespace aol
