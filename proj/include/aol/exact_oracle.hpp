#pragma once

#include <algorithm>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "aol/errors.hpp"
#include "aol/history.hpp"
#include "aol/pomdp.hpp"
#include "aol/topology.hpp"

namespace aol {

inline constexpr std::size_t default_node_budget = 1'000'000;

/**
 * Brute-force belief-tree enumeration on small tabular models.
 *
 * q_star() is a plain Bellman recursion over all (action, observation) branches.
 * aol_value() and afo_value() walk the tree induced by a topology: open-loop
 * nodes maximize over the next action on the propagated belief, fully-observable
 * nodes branch over the true next state. Horizon counts reward terms, so a
 * horizon-1 query returns the expected immediate reward.
 */
class ExactOracle {
 public:
  explicit ExactOracle(const DiscretePomdp& model, std::size_t node_budget = default_node_budget)
      : model_(model), budget_(node_budget) {
    if (!model.finalized()) throw contract_violation("ExactOracle needs a finalized model");
  }

  std::size_t nodes_visited() const noexcept { return visited_; }

  double q_star(const ExactBelief& b, action_id a, int horizon) {
    check_horizon(horizon);
    visited_ = 0;
    return q_full(b, a, horizon);
  }

  double v_star(const ExactBelief& b, int horizon) {
    check_horizon(horizon);
    visited_ = 0;
    double best = -std::numeric_limits<double>::infinity();
    for (int a = 0; a < model_.num_actions(); ++a) best = std::max(best, q_full(b, a, horizon));
    return best;
  }

  std::vector<double> q_star_all(const ExactBelief& b, int horizon) {
    std::vector<double> q;
    for (int a = 0; a < model_.num_actions(); ++a) q.push_back(q_star(b, a, horizon));
    return q;
  }

  double aol_value(const ExactBelief& b, action_id a, const Topology& tau, int horizon) {
    action_id forced[] = {a};
    return forced_value(b, forced, tau, horizon, bound_side::lower);
  }

  double afo_value(const ExactBelief& b, action_id a, const Topology& tau, int horizon) {
    action_id forced[] = {a};
    return forced_value(b, forced, tau, horizon, bound_side::upper);
  }

  /// Value of the topology tree of `horizon` steps from `b` when the first
  /// forced.size() actions are fixed and the optimal policy of the chosen side
  /// (AOL for lower, AFO for upper) is followed afterwards.
  double forced_value(const ExactBelief& b, std::span<const action_id> forced, const Topology& tau, int horizon,
                      bound_side side) {
    check_horizon(horizon);
    if (forced.empty()) throw contract_violation("forced_value needs at least the root action");
    if (static_cast<int>(forced.size()) > horizon) throw contract_violation("more forced actions than horizon steps");
    visited_ = 0;
    forced_ = forced;
    HistoryKey root;
    return q_topo(side, tau, root, b, 0, forced[0], horizon);
  }

 private:
  void check_horizon(int horizon) const {
    if (horizon < 1) throw contract_violation("horizon must be at least 1");
  }

  void count() {
    if (++visited_ > budget_)
      throw budget_exceeded("exact enumeration exceeded the node budget of " + std::to_string(budget_));
  }

  double q_full(const ExactBelief& b, action_id a, int steps_left) {
    count();
    double q = expected_reward(model_, b, a);
    if (steps_left <= 1) return q;
    ExactBelief prop = propagate(model_, b, a);
    auto pz = observation_distribution(model_, prop);
    for (int z = 0; z < model_.num_observations(); ++z) {
      if (pz[z] <= 0.0) continue;
      ExactBelief post = condition(model_, prop, z).posterior;
      double best = -std::numeric_limits<double>::infinity();
      for (int a2 = 0; a2 < model_.num_actions(); ++a2) best = std::max(best, q_full(post, a2, steps_left - 1));
      q += pz[z] * best;
    }
    return q;
  }

  double v_topo(bound_side side, const Topology& tau, const HistoryKey& key, const ExactBelief& b, int depth,
                int horizon) {
    if (depth < static_cast<int>(forced_.size())) return q_topo(side, tau, key, b, depth, forced_[depth], horizon);
    double best = -std::numeric_limits<double>::infinity();
    for (int a = 0; a < model_.num_actions(); ++a) best = std::max(best, q_topo(side, tau, key, b, depth, a, horizon));
    return best;
  }

  double q_topo(bound_side side, const Topology& tau, const HistoryKey& key, const ExactBelief& b, int depth,
                action_id a, int horizon) {
    count();
    double q = expected_reward(model_, b, a);
    if (depth + 1 >= horizon) return q;
    ExactBelief prop = propagate(model_, b, a);
    if (tau.beta(side, key) == closed) {
      auto pz = observation_distribution(model_, prop);
      for (int z = 0; z < model_.num_observations(); ++z) {
        if (pz[z] <= 0.0) continue;
        ExactBelief post = condition(model_, prop, z).posterior;
        q += pz[z] * v_topo(side, tau, extended(key, {act(a), obs(z)}), post, depth + 1, horizon);
      }
    } else if (side == bound_side::lower) {
      q += v_topo(side, tau, extended(key, {act(a)}), prop, depth + 1, horizon);
    } else {
      for (int x = 0; x < prop.size(); ++x) {
        if (prop[x] <= 0.0) continue;
        q += prop[x] * v_topo(side, tau, extended(key, {act(a), st(x)}), ExactBelief::point_mass(prop.size(), x),
                              depth + 1, horizon);
      }
    }
    return q;
  }

  const DiscretePomdp& model_;
  std::size_t budget_;
  std::size_t visited_ = 0;
  std::span<const action_id> forced_;
};

inline double exact_q_star(const DiscretePomdp& model, const ExactBelief& b, action_id a, int horizon,
                           std::size_t budget = default_node_budget) {
  return ExactOracle(model, budget).q_star(b, a, horizon);
}

inline double exact_aol_value(const DiscretePomdp& model, const ExactBelief& b, action_id a, const Topology& tau,
                              int horizon, std::size_t budget = default_node_budget) {
  return ExactOracle(model, budget).aol_value(b, a, tau, horizon);
}

inline double exact_afo_value(const DiscretePomdp& model, const ExactBelief& b, action_id a, const Topology& tau,
                              int horizon, std::size_t budget = default_node_budget) {
  return ExactOracle(model, budget).afo_value(b, a, tau, horizon);
}

/// Lowest-index maximizer of a value vector.
inline int argmax(std::span<const double> v) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(v.size()); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

}  // namespace aol
