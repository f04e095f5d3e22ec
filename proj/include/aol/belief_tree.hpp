#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "aol/errors.hpp"
#include "aol/history.hpp"
#include "aol/pomdp.hpp"
#include "aol/topology.hpp"

namespace aol {

struct BeliefTreeNode {
  HistoryKey key;  ///< full key; fully-observable steps carry state entries
  int depth = 0;
  node_mode mode = node_mode::open_loop;
  ExactBelief belief;
  std::vector<HistoryKey> children;  ///< grouped by action, outcomes ascending
  std::vector<double> q;             ///< per action; zeros at depth == horizon
  bool cached = false;
  std::uint64_t visits = 0;
};

struct CacheReport {
  std::size_t cached = 0;       ///< same key, same mode: belief reused bitwise
  std::size_t reexpanded = 0;   ///< same key, mode changed
  std::size_t created = 0;      ///< key absent from the previous tree
  std::size_t dropped = 0;      ///< previous keys no longer reachable
  std::size_t previous_size = 0;

  double retention() const noexcept {
    return previous_size ? static_cast<double>(cached) / static_cast<double>(previous_size) : 1.0;
  }
};

/**
 * Exact belief tree of one bound side under a topology.
 *
 * Nodes exist for depths 0..horizon; node values follow the same recursion as
 * ExactOracle (reward at depths below the horizon, leaves worth zero). Children
 * are only created for outcomes with positive probability.
 */
class BeliefTree {
 public:
  using node_map = std::map<HistoryKey, BeliefTreeNode>;

  static BeliefTree build(const DiscretePomdp& model, const ExactBelief& root, const Topology& tau, bound_side side,
                          int horizon, std::size_t node_budget = 1'000'000, const BeliefTree* previous = nullptr) {
    if (horizon < 1) throw contract_violation("horizon must be at least 1");
    BeliefTree t;
    t.side_ = side;
    t.horizon_ = horizon;
    Builder b{model, tau, side, horizon, node_budget, previous, t};
    b.expand({}, root, 0);
    if (previous) {
      t.report_.previous_size = previous->size();
      for (const auto& [k, n] : previous->nodes_)
        if (!t.nodes_.count(k)) ++t.report_.dropped;
    }
    return t;
  }

  bound_side side() const noexcept { return side_; }
  int horizon() const noexcept { return horizon_; }
  std::size_t size() const noexcept { return nodes_.size(); }
  const node_map& nodes() const noexcept { return nodes_; }
  const CacheReport& cache_report() const noexcept { return report_; }

  const BeliefTreeNode& root() const { return nodes_.at(HistoryKey{}); }
  const BeliefTreeNode* find(const HistoryKey& key) const {
    auto it = nodes_.find(key);
    return it == nodes_.end() ? nullptr : &it->second;
  }

  std::size_t count_at_depth(int d) const {
    std::size_t n = 0;
    for (const auto& [k, node] : nodes_) n += node.depth == d;
    return n;
  }

  /// Simplified nodes whose outgoing step still influences the root value
  /// (depth <= horizon - 2), as projected keys.
  std::vector<RefinementCandidate> candidates() const {
    std::vector<RefinementCandidate> out;
    for (const auto& [k, node] : nodes_)
      if (node.mode != node_mode::closed_loop && node.depth <= horizon_ - 2) out.push_back({project(k), node.depth});
    return out;
  }

 private:
  struct Builder {
    const DiscretePomdp& model;
    const Topology& tau;
    bound_side side;
    int horizon;
    std::size_t budget;
    const BeliefTree* previous;
    BeliefTree& tree;

    double expand(const HistoryKey& key, const ExactBelief& belief, int depth) {
      if (tree.nodes_.size() >= budget)
        throw budget_exceeded("belief tree exceeded the node budget of " + std::to_string(budget));
      BeliefTreeNode& node = tree.nodes_[key];
      node.key = key;
      node.depth = depth;
      node.mode = tau.mode(side, key);
      node.belief = belief;
      if (previous) {
        const BeliefTreeNode* old = previous->find(key);
        if (!old) {
          ++tree.report_.created;
        } else if (old->mode == node.mode) {
          node.cached = true;
          node.belief = old->belief;
          node.visits = old->visits;
          ++tree.report_.cached;
        } else {
          ++tree.report_.reexpanded;
        }
      } else {
        ++tree.report_.created;
      }
      const int na = model.num_actions();
      node.q.assign(static_cast<std::size_t>(na), 0.0);
      if (depth >= horizon) return 0.0;

      // The node reference stays valid: std::map never moves elements.
      const node_mode mode = node.mode;
      double best = -std::numeric_limits<double>::infinity();
      for (int a = 0; a < na; ++a) {
        double q = expected_reward(model, belief, a);
        ExactBelief prop = propagate(model, belief, a);
        if (mode == node_mode::closed_loop) {
          auto pz = observation_distribution(model, prop);
          for (int z = 0; z < model.num_observations(); ++z) {
            if (pz[z] <= 0.0) continue;
            HistoryKey child = extended(key, {act(a), obs(z)});
            node.children.push_back(child);
            q += pz[z] * expand(child, condition(model, prop, z).posterior, depth + 1);
          }
        } else if (mode == node_mode::open_loop) {
          HistoryKey child = extended(key, {act(a)});
          node.children.push_back(child);
          q += expand(child, prop, depth + 1);
        } else {
          for (int x = 0; x < prop.size(); ++x) {
            if (prop[x] <= 0.0) continue;
            HistoryKey child = extended(key, {act(a), st(x)});
            node.children.push_back(child);
            q += prop[x] * expand(child, ExactBelief::point_mass(prop.size(), x), depth + 1);
          }
        }
        node.q[static_cast<std::size_t>(a)] = q;
        best = std::max(best, q);
      }
      return best;
    }
  };

  bound_side side_ = bound_side::lower;
  int horizon_ = 1;
  node_map nodes_;
  CacheReport report_;
};

struct TreeRefinement {
  TopologyTransition transition;
  BeliefTree tree;
};

/// Refines the topology and rebuilds the tree against the previous one so the
/// report lists which nodes were kept.
inline TreeRefinement refine_topology(const DiscretePomdp& model, const Topology& tau, const BeliefTree& tree,
                                      const std::vector<HistoryKey>& selection,
                                      std::size_t node_budget = 1'000'000) {
  auto tr = refine_topology(tau, selection, model.num_observations());
  auto rebuilt = BeliefTree::build(model, tree.root().belief, tr.topology, tree.side(), tree.horizon(), node_budget,
                                   &tree);
  return {std::move(tr), std::move(rebuilt)};
}

}  // namespace aol
