#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <future>
#include <limits>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "aol/belief_tree.hpp"
#include "aol/errors.hpp"
#include "aol/format.hpp"
#include "aol/pomdp.hpp"
#include "aol/topology.hpp"

namespace aol {

struct EstimationMeta {
  int num_particles = 0;
  int num_observations = 0;
  int c = 0;  ///< min(N, N^O)
};

struct BoundPair {
  double lower = 0.0;
  double upper = 0.0;
  action_id action = 0;
  std::string topology_id;
  std::optional<EstimationMeta> estimation;

  bool estimated() const noexcept { return estimation.has_value(); }
  /// lower > upper beyond rounding; expected only from sampling noise.
  bool crossed() const noexcept { return lower > upper + 1e-9; }
  double width() const noexcept { return upper - lower; }
};

enum class separation_status { separated, overlapping };

inline const char* to_string(separation_status s) { return s == separation_status::separated ? "separated" : "overlapping"; }

struct SeparationResult {
  separation_status status = separation_status::overlapping;
  action_id optimal_action = 0;  ///< argmax of the upper bounds
  double margin = 0.0;           ///< lb(a*) - max other ub - slack
  std::vector<action_id> overlapping_set;

  bool separated() const noexcept { return status == separation_status::separated; }
};

/**
 * a* = argmax ub (lowest index on ties). Separated when lb(a*) clears every
 * other upper bound by at least `slack`.
 */
inline SeparationResult check_separation(std::span<const BoundPair> bounds, double slack = 0.0) {
  if (bounds.empty()) throw contract_violation("check_separation needs at least one action");
  SeparationResult r;
  std::size_t best = 0;
  for (std::size_t i = 1; i < bounds.size(); ++i)
    if (bounds[i].upper > bounds[best].upper) best = i;
  r.optimal_action = bounds[best].action;
  if (bounds.size() == 1) {
    r.status = separation_status::separated;
    r.margin = std::numeric_limits<double>::infinity();
    return r;
  }
  double other = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < bounds.size(); ++i)
    if (i != best) other = std::max(other, bounds[i].upper);
  r.margin = bounds[best].lower - other - slack;
  if (r.margin >= 0.0) {
    r.status = separation_status::separated;
    return r;
  }
  r.overlapping_set.push_back(bounds[best].action);
  for (std::size_t i = 0; i < bounds.size(); ++i)
    if (i != best && bounds[i].upper > bounds[best].lower - slack) r.overlapping_set.push_back(bounds[i].action);
  std::sort(r.overlapping_set.begin(), r.overlapping_set.end());
  return r;
}

/// One evaluation of both bound sides under a topology.
struct Evaluation {
  std::vector<BoundPair> bounds;  ///< indexed by action
  std::vector<RefinementCandidate> candidates;
  std::size_t cache_hits = 0;
  std::size_t cache_misses = 0;
};

class BoundEvaluator {
 public:
  virtual ~BoundEvaluator() = default;
  virtual Evaluation evaluate(const Topology& tau) = 0;
  virtual int num_observations() const = 0;
  virtual std::string name() const = 0;
};

/// Exact trees for both sides, built concurrently. Successive calls rebuild
/// against the previous trees so cache reports are available.
class ExactBoundEvaluator final : public BoundEvaluator {
 public:
  ExactBoundEvaluator(const DiscretePomdp& model, ExactBelief root, int horizon,
                      std::size_t node_budget = 1'000'000)
      : model_(model), root_(std::move(root)), horizon_(horizon), budget_(node_budget) {}

  Evaluation evaluate(const Topology& tau) override {
    auto build = [&](bound_side side, const BeliefTree* prev) {
      return BeliefTree::build(model_, root_, tau, side, horizon_, budget_, prev);
    };
    auto lo = std::async(std::launch::async, build, bound_side::lower, lower_ ? &*lower_ : nullptr);
    auto hi = std::async(std::launch::async, build, bound_side::upper, upper_ ? &*upper_ : nullptr);
    BeliefTree lt = lo.get();
    BeliefTree ut = hi.get();

    Evaluation ev;
    const std::string id = tau.id();
    for (int a = 0; a < model_.num_actions(); ++a)
      ev.bounds.push_back({lt.root().q[a], ut.root().q[a], a, id, std::nullopt});
    ev.candidates = lt.candidates();
    auto more = ut.candidates();
    ev.candidates.insert(ev.candidates.end(), more.begin(), more.end());
    ev.cache_hits = lt.cache_report().cached + ut.cache_report().cached;
    ev.cache_misses = lt.cache_report().created + lt.cache_report().reexpanded + ut.cache_report().created +
                      ut.cache_report().reexpanded;
    lower_.emplace(std::move(lt));
    upper_.emplace(std::move(ut));
    return ev;
  }

  int num_observations() const override { return model_.num_observations(); }
  std::string name() const override { return "exact"; }

  const BeliefTree* lower_tree() const { return lower_ ? &*lower_ : nullptr; }
  const BeliefTree* upper_tree() const { return upper_ ? &*upper_ : nullptr; }

 private:
  const DiscretePomdp& model_;
  ExactBelief root_;
  int horizon_;
  std::size_t budget_;
  std::optional<BeliefTree> lower_;
  std::optional<BeliefTree> upper_;
};

/// Picks nodes to flip from an evaluation and its separation result.
using RefinementPolicy = std::function<std::vector<HistoryKey>(const Evaluation&, const SeparationResult&)>;

/// Shallowest simplified layer under the overlapping root actions.
inline RefinementPolicy shallowest_policy(int batch = 0) {
  return [batch](const Evaluation& ev, const SeparationResult& sep) {
    return select_shallowest(ev.candidates, sep.overlapping_set, batch);
  };
}

struct PlanOptions {
  int max_refinements = 16;
  double slack = 0.0;  ///< epsilon subtracted from the separation margin
  RefinementPolicy policy = shallowest_policy();
};

struct BoundTraceRow {
  int iteration = 0;
  BoundPair bound;
};

struct PlanResult {
  action_id action = 0;
  bool guaranteed = false;
  SeparationResult separation;
  int refinements = 0;
  Topology topology;
  std::vector<Topology> topology_trace;
  std::vector<BoundTraceRow> bound_trace;
  std::vector<BoundPair> final_bounds;
  std::size_t cache_hits = 0;
  std::size_t cache_misses = 0;
};

/// evaluate -> separate -> refine until the root action is certified or the
/// refinement budget (or the candidate supply) runs out. An exhausted search
/// returns the action with the greatest lower bound, flagged not guaranteed.
inline PlanResult plan_with_guarantees(BoundEvaluator& evaluator, const Topology& initial,
                                       const PlanOptions& options = {}) {
  if (options.max_refinements < 0) throw contract_violation("max_refinements must be non-negative");
  PlanResult out;
  out.topology = initial;
  for (int iter = 0;; ++iter) {
    Evaluation ev = evaluator.evaluate(out.topology);
    out.topology_trace.push_back(out.topology);
    out.cache_hits += ev.cache_hits;
    out.cache_misses += ev.cache_misses;
    for (const auto& b : ev.bounds) out.bound_trace.push_back({iter, b});
    out.separation = check_separation(ev.bounds, options.slack);
    out.final_bounds = ev.bounds;
    if (out.separation.separated()) {
      out.action = out.separation.optimal_action;
      out.guaranteed = true;
      return out;
    }
    std::vector<HistoryKey> selection;
    if (iter < options.max_refinements) selection = options.policy(ev, out.separation);
    if (selection.empty()) break;
    auto tr = refine_topology(out.topology, selection, evaluator.num_observations());
    if (tr.flipped == 0) break;
    out.topology = std::move(tr.topology);
    ++out.refinements;
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < out.final_bounds.size(); ++i)
    if (out.final_bounds[i].lower > out.final_bounds[best].lower) best = i;
  out.action = out.final_bounds[best].action;
  out.guaranteed = false;
  return out;
}

inline void write_bound_trace(std::ostream& os, std::span<const BoundTraceRow> rows) {
  os << "iteration,action,lb,ub,topology_id\n";
  for (const auto& r : rows)
    os << r.iteration << "," << r.bound.action << "," << fmt9(r.bound.lower) << "," << fmt9(r.bound.upper) << ","
       << r.bound.topology_id << "\n";
}

/// 1 - 2|A|(|A|C)^(L-d) exp(-C lambda^2 / (2 Vmax^2)), clamped to [0, 1].
/// Reported for documentation only; it is vacuous at small C.
inline double nominal_confidence(int num_actions, int c, int horizon, int depth, double lambda, double v_max) {
  double log_fail = std::log(2.0 * num_actions) + (horizon - depth) * std::log(static_cast<double>(num_actions) * c) -
                    c * lambda * lambda / (2.0 * v_max * v_max);
  return std::clamp(1.0 - std::exp(log_fail), 0.0, 1.0);
}

}  // namespace aol
