#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <ostream>
#include <random>
#include <span>
#include <unordered_map>
#include <vector>

#include "aol/errors.hpp"
#include "aol/format.hpp"
#include "aol/history.hpp"
#include "aol/pomdp.hpp"
#include "aol/rng.hpp"
#include "aol/topology.hpp"

namespace aol {

struct PomcpConfig {
  double ucb_c = 1.0;
  double pw_k = 100.0;     ///< a transition fires once sim_index > k * j^alpha
  double pw_alpha = 1.0;
  int nodes_per_transition = 1;  ///< m
  bool adaptive = true;          ///< false keeps the initial topology (plain POMCP when fully closed-loop)
  Topology initial_topology = Topology::fully_open_loop();
  bound_side mode = bound_side::lower;  ///< lower: Eq. 2 histories, upper: Eq. 3 histories
  int horizon = 3;
  long max_simulations = 10'000;
  double time_budget_ms = 0.0;  ///< 0 disables the wall-clock budget
  bool recommend_by_value = true;
  bool track_open_loop_fraction = true;  ///< costs a tree scan per transition
  std::uint64_t seed = 0;

  void validate() const {
    if (ucb_c < 0.0) throw contract_violation("ucb constant must be non-negative");
    if (pw_k <= 0.0 || pw_alpha <= 0.0 || pw_alpha > 1.0) throw contract_violation("need k > 0 and alpha in (0, 1]");
    if (nodes_per_transition <= 0) throw contract_violation("nodes_per_transition must be positive");
    if (horizon <= 0) throw contract_violation("horizon must be positive");
    if (max_simulations <= 0 && time_budget_ms <= 0.0) throw contract_violation("search needs a positive budget");
  }
};

struct SearchNode {
  std::uint64_t visits = 0;  ///< N(h)
  std::vector<std::uint64_t> action_visits;  ///< N(ha)
  std::vector<double> values;                ///< V(ha)
  std::vector<state_id> bag;                 ///< B(h)
  int depth = 1;
};

struct TransitionRecord {
  long sim_index = 0;
  int j = 0;
  int nodes_flipped = 0;
  double open_loop_fraction = 0.0;
  bool identity = false;
};

struct SearchResult {
  action_id action = 0;
  double value = 0.0;
  long simulations = 0;
  int transitions = 0;
  int identity_transitions = 0;
  std::size_t tree_size = 0;
  std::vector<double> root_values;
  std::vector<std::uint64_t> root_visits;
  std::vector<TransitionRecord> diagnostics;
  Topology topology;
};

inline void write_transition_diagnostics(std::ostream& os, std::span<const TransitionRecord> rows) {
  os << "sim_index,j,nodes_flipped,open_loop_fraction\n";
  for (const auto& r : rows) os << r.sim_index << "," << r.j << "," << r.nodes_flipped << "," << fmt9(r.open_loop_fraction) << "\n";
}

/**
 * Anytime tree search over augmented histories with progressive topology
 * adaptation. Depth counts from 1 at the root and simulations return 0 past the
 * horizon, so every simulated return sums `horizon` rewards.
 */
class AtPomcp {
 public:
  AtPomcp(const DiscretePomdp& model, PomcpConfig config)
      : model_(model), cfg_(std::move(config)), topology_(cfg_.initial_topology),
        rng_(make_stream(cfg_.seed, {tag(stream_tag::planner)})) {
    cfg_.validate();
  }

  SearchResult search(const ExactBelief& root) {
    std::discrete_distribution<int> root_dist(root.probabilities.begin(), root.probabilities.end());
    const auto start = std::chrono::steady_clock::now();
    long i = 0;
    while (true) {
      if (cfg_.max_simulations > 0 && i >= cfg_.max_simulations) break;
      if (cfg_.time_budget_ms > 0.0 && i > 0) {
        std::chrono::duration<double, std::milli> el = std::chrono::steady_clock::now() - start;
        if (el.count() >= cfg_.time_budget_ms) break;
      }
      ++i;
      simulate(root_dist(rng_), HistoryKey{}, 1, i);
    }
    return result(i);
  }

  /// One call of the simulation routine; exposed for tests.
  double simulate(state_id s, const HistoryKey& h, int depth, long sim_index) {
    if (depth > cfg_.horizon) return 0.0;
    const int na = model_.num_actions();
    auto it = tree_.find(h);
    if (it == tree_.end()) {
      SearchNode node;
      node.visits = 1;
      node.action_visits.assign(na, 0);
      node.values.assign(na, 0.0);
      node.bag.push_back(s);
      node.depth = depth;
      tree_.emplace(h, std::move(node));
      if (depth <= cfg_.horizon - 1) open_keys_.push_back(h);
      return rollout(s, depth);
    }
    const action_id a = select_action(it->second);
    const double r = model_.reward(s, a);
    const state_id s2 = model_.sample_next_state(s, a, rng_);
    const observation_id o = model_.sample_observation(s2, rng_);

    if (cfg_.adaptive && sim_index > cfg_.pw_k * std::pow(static_cast<double>(j_), cfg_.pw_alpha)) {
      ++j_;
      random_topo_transition(sim_index);
    }

    HistoryKey h2 = cfg_.mode == bound_side::lower ? update_history_aol(topology_, AugmentedHistory(h), a, o).key()
                                                   : update_history_afo(topology_, AugmentedHistory(h), a, o, s2).key();
    const double R = r + simulate(s2, h2, depth + 1, sim_index);

    SearchNode& node = tree_.at(h);  // re-lookup: the recursion may have rehashed
    node.bag.push_back(s);
    ++node.visits;
    ++node.action_visits[a];
    node.values[a] += (R - node.values[a]) / static_cast<double>(node.action_visits[a]);
    return R;
  }

  /// Flips up to m uniformly chosen visited simplified nodes that the current
  /// topology still reaches. Returns the number flipped; 0 marks an identity.
  int random_topo_transition(long sim_index = 0) {
    // Draw uniformly among the visited simplified nodes still reachable.
    // Refinement only closes nodes, so an ineligible entry never comes back
    // and can be dropped on sight.
    std::vector<HistoryKey> chosen;
    while (static_cast<int>(chosen.size()) < cfg_.nodes_per_transition && !open_keys_.empty()) {
      std::uniform_int_distribution<std::size_t> pick(0, open_keys_.size() - 1);
      const std::size_t idx = pick(rng_);
      HistoryKey k = std::move(open_keys_[idx]);
      open_keys_[idx] = std::move(open_keys_.back());
      open_keys_.pop_back();
      if (topology_.beta(cfg_.mode, k) == simplified && is_consistent(topology_, cfg_.mode, k))
        chosen.push_back(std::move(k));
    }
    int flipped = 0;
    if (!chosen.empty()) {
      flipped = refine_in_place(topology_, chosen, model_.num_observations()).flipped;
    }
    TransitionRecord rec;
    rec.sim_index = sim_index;
    rec.j = j_;
    rec.nodes_flipped = flipped;
    rec.identity = flipped == 0;
    rec.open_loop_fraction =
        cfg_.track_open_loop_fraction ? open_loop_fraction() : std::numeric_limits<double>::quiet_NaN();
    diagnostics_.push_back(rec);
    return flipped;
  }

  const Topology& topology() const noexcept { return topology_; }
  const SearchNode* node(const HistoryKey& h) const {
    auto it = tree_.find(h);
    return it == tree_.end() ? nullptr : &it->second;
  }
  std::size_t tree_size() const noexcept { return tree_.size(); }
  const std::unordered_map<HistoryKey, SearchNode, HistoryKeyHash>& tree() const noexcept { return tree_; }

  /// Reachable nodes per depth under the current topology (orphans excluded).
  std::vector<std::size_t> nodes_per_depth() const {
    std::vector<std::size_t> out(static_cast<std::size_t>(cfg_.horizon) + 2, 0);
    for (const auto& [k, n] : tree_)
      if (is_consistent(topology_, cfg_.mode, k)) ++out[static_cast<std::size_t>(n.depth)];
    return out;
  }

 private:
  action_id select_action(const SearchNode& node) const {
    const int na = model_.num_actions();
    for (int a = 0; a < na; ++a)
      if (node.action_visits[a] == 0) return a;
    const double logn = std::log(static_cast<double>(node.visits));
    action_id best = 0;
    double best_v = -std::numeric_limits<double>::infinity();
    for (int a = 0; a < na; ++a) {
      double v = node.values[a] + cfg_.ucb_c * std::sqrt(logn / static_cast<double>(node.action_visits[a]));
      if (v > best_v) {
        best_v = v;
        best = a;
      }
    }
    return best;
  }

  double rollout(state_id s, int depth) {
    std::uniform_int_distribution<int> pick(0, model_.num_actions() - 1);
    double total = 0.0;
    for (int d = depth; d <= cfg_.horizon; ++d) {
      action_id a = pick(rng_);
      total += model_.reward(s, a);
      s = model_.sample_next_state(s, a, rng_);
    }
    return total;
  }

  double open_loop_fraction() const {
    std::size_t total = 0, open = 0;
    for (const auto& [k, n] : tree_) {
      if (n.depth > cfg_.horizon - 1 || !is_consistent(topology_, cfg_.mode, k)) continue;
      ++total;
      open += topology_.beta(cfg_.mode, k) == simplified;
    }
    return total ? static_cast<double>(open) / static_cast<double>(total) : 0.0;
  }

  SearchResult result(long sims) const {
    SearchResult r;
    r.simulations = sims;
    r.tree_size = tree_.size();
    r.diagnostics = diagnostics_;
    r.transitions = static_cast<int>(diagnostics_.size());
    for (const auto& d : diagnostics_) r.identity_transitions += d.identity;
    r.topology = topology_;
    const SearchNode* root = node({});
    if (!root) return r;
    r.root_values = root->values;
    r.root_visits = root->action_visits;
    action_id best = 0;
    for (int a = 1; a < model_.num_actions(); ++a) {
      bool better = cfg_.recommend_by_value ? root->values[a] > root->values[best]
                                            : root->action_visits[a] > root->action_visits[best];
      if (better) best = a;
    }
    r.action = best;
    r.value = root->values[best];
    return r;
  }

  const DiscretePomdp& model_;
  PomcpConfig cfg_;
  Topology topology_;
  rng_engine rng_;
  int j_ = 1;
  std::unordered_map<HistoryKey, SearchNode, HistoryKeyHash> tree_;
  std::vector<HistoryKey> open_keys_;  ///< superset of the transition candidates, creation order
  std::vector<TransitionRecord> diagnostics_;
};

inline SearchResult pomcp_search(const DiscretePomdp& model, const ExactBelief& root, const PomcpConfig& config) {
  AtPomcp p(model, config);
  return p.search(root);
}

}  // namespace aol
