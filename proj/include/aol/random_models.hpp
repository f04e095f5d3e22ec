#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "aol/history.hpp"
#include "aol/pomdp.hpp"
#include "aol/rng.hpp"
#include "aol/topology.hpp"

namespace aol {

struct TinyModelOptions {
  int max_states = 4;
  int max_observations = 3;
  int max_actions = 3;
  int min_horizon = 2;
  int max_horizon = 3;
  double zero_probability = 0.3;    ///< chance a transition/observation entry is forced to zero
  bool positive_observations = false;  ///< every P(z|x) > 0
  bool positive_rewards = false;       ///< rewards in [0, 1] instead of [-1, 1]
  double observation_sharpness = 1.0;  ///< <1 flattens the observation rows toward uniform
};

namespace detail {

inline std::vector<double> random_simplex(int n, double zero_p, rng_engine& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> v(static_cast<std::size_t>(n));
  double sum = 0.0;
  for (auto& x : v) {
    x = u(rng) < zero_p ? 0.0 : -std::log(1.0 - u(rng));
    sum += x;
  }
  if (sum <= 0.0) {
    v[std::uniform_int_distribution<int>(0, n - 1)(rng)] = 1.0;
    sum = 1.0;
  }
  for (auto& x : v) x /= sum;
  return v;
}

}  // namespace detail

/// Random small model for property checks. Deterministic in `seed`.
inline DiscretePomdp random_tiny_pomdp(std::uint64_t seed, const TinyModelOptions& o = {}) {
  auto rng = make_stream(seed, {0x7171});
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  const int ns = pick(2, o.max_states), na = pick(2, o.max_actions), nz = pick(2, o.max_observations);
  const int horizon = pick(o.min_horizon, o.max_horizon);
  DiscretePomdp m(ns, na, nz, horizon);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int s = 0; s < ns; ++s) {
    for (int a = 0; a < na; ++a) {
      auto row = detail::random_simplex(ns, o.zero_probability, rng);
      for (int t = 0; t < ns; ++t) m.set_transition(s, a, t, row[t]);
      m.set_reward(s, a, o.positive_rewards ? u(rng) : 2.0 * u(rng) - 1.0);
    }
    auto orow = detail::random_simplex(nz, o.positive_observations ? 0.0 : o.zero_probability, rng);
    if (o.positive_observations) {
      const double mix = std::clamp(o.observation_sharpness, 0.0, 1.0);
      for (auto& p : orow) p = mix * p + (1.0 - mix) / nz;
      double sum = 0.0;
      for (auto& p : orow) sum += (p = std::max(p, 1e-3));
      for (auto& p : orow) p /= sum;
    }
    for (int z = 0; z < nz; ++z) m.set_observation(s, z, orow[z]);
  }
  m.set_initial_belief(detail::random_simplex(ns, 0.0, rng));
  m.finalize();
  return m;
}

/// Random pattern over every node a tree of `horizon` steps can reach, with both
/// assignments identical. Nodes deeper than horizon-2 are left at the default.
inline Topology random_mixed_topology(const DiscretePomdp& model, int horizon, std::uint64_t seed, double p_closed = 0.5) {
  auto rng = make_stream(seed, {tag(stream_tag::topology)});
  std::bernoulli_distribution coin(p_closed);
  Topology tau(simplified);
  struct Walker {
    const DiscretePomdp& m;
    int horizon;
    rng_engine& rng;
    std::bernoulli_distribution& coin;
    Topology& tau;
    void visit(const HistoryKey& key, int depth) {
      if (depth > horizon - 2) return;
      beta_t b = coin(rng) ? closed : simplified;
      tau.set(key, b);
      for (int a = 0; a < m.num_actions(); ++a) {
        if (b == simplified) {
          visit(extended(key, {act(a)}), depth + 1);
        } else {
          for (int z = 0; z < m.num_observations(); ++z) visit(extended(key, {act(a), obs(z)}), depth + 1);
        }
      }
    }
  };
  Walker{model, horizon, rng, coin, tau}.visit({}, 0);
  return tau;
}

/// Two-state listening problem: open-loop plans cannot tell the doors apart,
/// so the value of listening only shows once observations are used.
/// Actions: 0 listen, 1 open left, 2 open right. Observations: 0 hear left, 1 hear right.
inline DiscretePomdp tiger_pomdp(int horizon = 2, double accuracy = 0.85) {
  DiscretePomdp m(2, 3, 2, horizon);
  for (int s = 0; s < 2; ++s) {
    m.set_transition(s, 0, s, 1.0);
    for (int a = 1; a < 3; ++a) {
      m.set_transition(s, a, 0, 0.5);
      m.set_transition(s, a, 1, 0.5);
    }
    m.set_observation(s, s, accuracy);
    m.set_observation(s, 1 - s, 1.0 - accuracy);
    m.set_reward(s, 0, -1.0);
    m.set_reward(s, 1, s == 0 ? -100.0 : 10.0);  // tiger behind the left door in state 0
    m.set_reward(s, 2, s == 1 ? -100.0 : 10.0);
  }
  m.set_initial_belief({0.5, 0.5});
  m.finalize();
  return m;
}

}  // namespace aol
