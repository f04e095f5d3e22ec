#pragma once

#include <algorithm>
#include <cstdint>
#include <future>
#include <thread>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "aol/bounds.hpp"
#include "aol/errors.hpp"
#include "aol/history.hpp"
#include "aol/pomdp.hpp"
#include "aol/rng.hpp"
#include "aol/topology.hpp"

namespace aol {

struct SparseConfig {
  int num_particles = 16;     ///< N
  int num_observations = 16;  ///< N^O
  int horizon = 3;
  std::uint64_t seed = 0;

  int c() const noexcept { return std::min(num_particles, num_observations); }
  void validate() const {
    if (num_particles <= 0 || num_observations <= 0 || horizon <= 0)
      throw contract_violation("SparseConfig: N, N^O and the horizon must be positive");
  }
};

struct SubtreeCacheEntry {
  std::uint64_t signature = 0;
  std::vector<double> q;
  std::vector<RefinementCandidate> candidates;
};

/// Per-task memo of subtree estimates. A node's particle set is a function of
/// its key and the seed, so (key, subtree signature) identifies its values.
struct SubtreeCache {
  std::unordered_map<HistoryKey, SubtreeCacheEntry, HistoryKeyHash> entries;
  std::size_t hits = 0;
  std::size_t misses = 0;
};

/**
 * Sparse-sampling estimator of the AOL (lower side) or AFO (upper side) value.
 *
 * Every node draws from streams derived from (seed, node key, action), never
 * from a shared engine, so estimates do not depend on evaluation order and the
 * two sides coincide bitwise wherever their keys coincide.
 */
class SparseEstimator {
 public:
  SparseEstimator(const DiscretePomdp& model, const SparseConfig& config, const Topology& tau, bound_side side,
                  SubtreeCache* cache = nullptr, std::span<const action_id> forced = {})
      : model_(model), cfg_(config), tau_(tau), side_(side), cache_(forced.empty() ? cache : nullptr),
        forced_(forced) {
    cfg_.validate();
  }

  /// Q-hat of `a` at the root. Forced actions, when given, replace the max at
  /// depths 1..forced.size()-1 (forced[0] is the root action itself).
  double root_q(const ParticleBelief& root, action_id a) {
    if (tau_.beta(side_, {}) != closed && cfg_.horizon >= 2) candidates_.push_back({{}, 0});
    return q(HistoryKey{}, root, 0, a);
  }

  const std::vector<RefinementCandidate>& candidates() const noexcept { return candidates_; }

 private:
  ParticleBelief propagate_set(const HistoryKey& key, const ParticleBelief& b, action_id a) const {
    auto rng = make_stream(cfg_.seed, {tag(stream_tag::propagate), key_hash(key), static_cast<std::uint64_t>(a)});
    std::vector<Particle> out;
    out.reserve(static_cast<std::size_t>(cfg_.num_particles));
    if (static_cast<int>(b.size()) == cfg_.num_particles) {
      for (const auto& p : b.particles()) out.push_back({model_.sample_next_state(p.state, a, rng), p.weight});
    } else {
      const double w = 1.0 / cfg_.num_particles;
      for (int i = 0; i < cfg_.num_particles; ++i) {
        const auto& p = b.particles()[b.sample_index(rng)];
        out.push_back({model_.sample_next_state(p.state, a, rng), w});
      }
    }
    return ParticleBelief(std::move(out));
  }

  double q(const HistoryKey& key, const ParticleBelief& b, int depth, action_id a) {
    double r = b.expected_reward(model_, a);
    if (depth + 1 >= cfg_.horizon) return r;
    ParticleBelief next = propagate_set(key, b, a);
    if (tau_.beta(side_, key) == closed) {
      auto rng = make_stream(cfg_.seed, {tag(stream_tag::observe), key_hash(key), static_cast<std::uint64_t>(a)});
      std::map<observation_id, int> counts;
      for (int i = 0; i < cfg_.num_observations; ++i) {
        state_id s = next.particles()[next.sample_index(rng)].state;
        ++counts[model_.sample_observation(s, rng)];
      }
      for (const auto& [z, n] : counts) {
        std::vector<Particle> ps(next.particles().begin(), next.particles().end());
        for (auto& p : ps) p.weight *= model_.observation(p.state, z);
        double v = value(extended(key, {act(a), obs(z)}), ParticleBelief(std::move(ps)), depth + 1);
        r += static_cast<double>(n) / cfg_.num_observations * v;
      }
    } else if (side_ == bound_side::lower) {
      r += value(extended(key, {act(a)}), next, depth + 1);
    } else {
      std::map<state_id, double> mass;
      for (const auto& p : next.particles()) mass[p.state] += p.weight;
      for (const auto& [x, w] : mass) r += w * value(extended(key, {act(a), st(x)}), ParticleBelief::point(x), depth + 1);
    }
    return r;
  }

  double value(const HistoryKey& key, const ParticleBelief& b, int depth) {
    if (depth < static_cast<int>(forced_.size())) return q(key, b, depth, forced_[depth]);
    std::uint64_t sig = 0;
    if (cache_) {
      sig = tau_.subtree_signature(side_, key);
      auto it = cache_->entries.find(key);
      if (it != cache_->entries.end() && it->second.signature == sig) {
        ++cache_->hits;
        candidates_.insert(candidates_.end(), it->second.candidates.begin(), it->second.candidates.end());
        return *std::max_element(it->second.q.begin(), it->second.q.end());
      }
      ++cache_->misses;
    }
    const std::size_t first = candidates_.size();
    if (tau_.beta(side_, key) != closed && depth <= cfg_.horizon - 2) candidates_.push_back({project(key), depth});
    std::vector<double> qs;
    qs.reserve(static_cast<std::size_t>(model_.num_actions()));
    for (int a = 0; a < model_.num_actions(); ++a) qs.push_back(q(key, b, depth, a));
    double best = *std::max_element(qs.begin(), qs.end());
    if (cache_) {
      SubtreeCacheEntry e{sig, std::move(qs), {candidates_.begin() + static_cast<std::ptrdiff_t>(first), candidates_.end()}};
      cache_->entries[key] = std::move(e);
    }
    return best;
  }

  const DiscretePomdp& model_;
  SparseConfig cfg_;
  const Topology& tau_;
  bound_side side_;
  SubtreeCache* cache_;
  std::span<const action_id> forced_;
  std::vector<RefinementCandidate> candidates_;
};

inline ParticleBelief root_particles(const ExactBelief& b, const SparseConfig& config) {
  auto rng = make_stream(config.seed, {tag(stream_tag::root_particles)});
  return ParticleBelief::sample(b, config.num_particles, rng);
}

inline double estimate_lb(const DiscretePomdp& model, const ParticleBelief& belief, action_id a, const Topology& tau,
                          const SparseConfig& config) {
  return SparseEstimator(model, config, tau, bound_side::lower).root_q(belief, a);
}

inline double estimate_ub(const DiscretePomdp& model, const ParticleBelief& belief, action_id a, const Topology& tau,
                          const SparseConfig& config) {
  return SparseEstimator(model, config, tau, bound_side::upper).root_q(belief, a);
}

/// Estimated Q-tilde: forced actions for the first forced.size() steps, then
/// the optimal policy of the chosen side.
inline double estimate_forced(const DiscretePomdp& model, const ParticleBelief& belief,
                              std::span<const action_id> forced, const Topology& tau, bound_side side,
                              const SparseConfig& config) {
  if (forced.empty()) throw contract_violation("estimate_forced needs at least the root action");
  return SparseEstimator(model, config, tau, side, nullptr, forced).root_q(belief, forced[0]);
}

/// Threads only pay off when there is more than one core to run them on; with
/// one core the launch cost rivals a whole open-loop evaluation. Results do
/// not depend on the policy since every branch owns its RNG stream.
inline std::launch root_launch_policy() {
  static const std::launch p = std::thread::hardware_concurrency() > 1 ? std::launch::async : std::launch::deferred;
  return p;
}

/// Both sides for every root action, as 2|A| concurrent tasks. `caches`, when
/// given, must hold 2|A| entries and is indexed side * |A| + action.
inline Evaluation solve_root(const DiscretePomdp& model, const ParticleBelief& root, const Topology& tau,
                             const SparseConfig& config, std::vector<SubtreeCache>* caches = nullptr) {
  config.validate();
  const int na = model.num_actions();
  if (caches && static_cast<int>(caches->size()) != 2 * na)
    throw contract_violation("solve_root: cache vector must hold 2|A| entries");
  struct TaskOut {
    double value;
    std::vector<RefinementCandidate> candidates;
  };
  std::vector<std::future<TaskOut>> tasks;
  std::vector<std::size_t> hits_before(2 * na, 0), misses_before(2 * na, 0);
  for (int s = 0; s < 2; ++s)
    for (int a = 0; a < na; ++a) {
      SubtreeCache* c = caches ? &(*caches)[s * na + a] : nullptr;
      if (c) {
        hits_before[s * na + a] = c->hits;
        misses_before[s * na + a] = c->misses;
      }
      tasks.push_back(std::async(root_launch_policy(), [&, s, a, c] {
        SparseEstimator est(model, config, tau, s == 0 ? bound_side::lower : bound_side::upper, c);
        double v = est.root_q(root, a);
        return TaskOut{v, est.candidates()};
      }));
    }
  Evaluation ev;
  const std::string id = tau.id();
  std::vector<TaskOut> outs;
  for (auto& t : tasks) outs.push_back(t.get());
  for (int a = 0; a < na; ++a) {
    BoundPair b{outs[a].value, outs[na + a].value, a, id,
                EstimationMeta{config.num_particles, config.num_observations, config.c()}};
    ev.bounds.push_back(std::move(b));
  }
  for (auto& o : outs) ev.candidates.insert(ev.candidates.end(), o.candidates.begin(), o.candidates.end());
  std::sort(ev.candidates.begin(), ev.candidates.end(), candidate_order);
  ev.candidates.erase(std::unique(ev.candidates.begin(), ev.candidates.end()), ev.candidates.end());
  if (caches)
    for (int i = 0; i < 2 * na; ++i) {
      ev.cache_hits += (*caches)[i].hits - hits_before[i];
      ev.cache_misses += (*caches)[i].misses - misses_before[i];
    }
  return ev;
}

/// Baseline SparsePFT: the closed-loop estimate of every root action, one task
/// per action. Both bound sides coincide there, so only one is computed.
inline std::vector<double> closed_loop_q(const DiscretePomdp& model, const ParticleBelief& root,
                                         const SparseConfig& config) {
  config.validate();
  const Topology tau = Topology::fully_closed_loop();
  std::vector<std::future<double>> tasks;
  for (int a = 0; a < model.num_actions(); ++a)
    tasks.push_back(std::async(root_launch_policy(), [&, a] { return estimate_lb(model, root, a, tau, config); }));
  std::vector<double> q;
  for (auto& t : tasks) q.push_back(t.get());
  return q;
}

/// Sampling evaluator for plan_with_guarantees; caches persist across calls.
class SparseBoundEvaluator final : public BoundEvaluator {
 public:
  SparseBoundEvaluator(const DiscretePomdp& model, ParticleBelief root, SparseConfig config)
      : model_(model), root_(std::move(root)), cfg_(config),
        caches_(static_cast<std::size_t>(2 * model.num_actions())) {}

  Evaluation evaluate(const Topology& tau) override { return solve_root(model_, root_, tau, cfg_, &caches_); }
  int num_observations() const override { return model_.num_observations(); }
  std::string name() const override { return "sparse_pft"; }
  const SparseConfig& config() const noexcept { return cfg_; }

 private:
  const DiscretePomdp& model_;
  ParticleBelief root_;
  SparseConfig cfg_;
  std::vector<SubtreeCache> caches_;
};

}  // namespace aol
