#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <future>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "aol/bounds.hpp"
#include "aol/envs.hpp"
#include "aol/errors.hpp"
#include "aol/exact_oracle.hpp"
#include "aol/format.hpp"
#include "aol/pomdp.hpp"
#include "aol/sparse_pft.hpp"
#include "aol/topology.hpp"

namespace aol {

using ObservationSets = std::vector<std::vector<observation_id>>;

enum class ck_mode {
  /// c_j = 0 when an allowed observation has zero likelihood in some reachable
  /// state but not in all of them; the posterior ratio is unbounded there.
  sound,
  /// min/max over the positive entries only, whatever the zero pattern.
  positive_entries,
};

struct LikelihoodRatioFactor {
  double value = 1.0;               ///< C_k as used for the bounds
  double positive_value = 1.0;      ///< product over positive entries only
  std::vector<double> factors;      ///< c_j as used
  ObservationSets observation_sets;
  std::vector<std::vector<state_id>> reachable_sets;
  bool support_gap = false;
};

/**
 * Product over steps j = 1..k of min/max positive likelihood P(z|x) with z in
 * the allowed set of step j and x reachable after a_{0:j-1}. `sets` empty means
 * the full observation space at every step.
 */
inline LikelihoodRatioFactor compute_ck(const DiscretePomdp& model, const ExactBelief& b0,
                                        std::span<const action_id> actions, const ObservationSets& sets = {},
                                        ck_mode mode = ck_mode::sound) {
  const std::size_t k = actions.size();
  if (!sets.empty() && sets.size() != k) throw contract_violation("need one observation set per step");
  LikelihoodRatioFactor out;
  for (std::size_t j = 1; j <= k; ++j) {
    auto reach = reachable_states(model, b0, actions.first(j));
    std::vector<observation_id> zs;
    if (sets.empty()) {
      zs.resize(static_cast<std::size_t>(model.num_observations()));
      for (int z = 0; z < model.num_observations(); ++z) zs[z] = z;
    } else {
      zs = sets[j - 1];
    }
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    bool gap = false;
    for (observation_id z : zs) {
      bool any_zero = false, any_pos = false;
      for (state_id x : reach) {
        double p = model.observation(x, z);
        if (p > 0.0) {
          any_pos = true;
          lo = std::min(lo, p);
          hi = std::max(hi, p);
        } else {
          any_zero = true;
        }
      }
      gap = gap || (any_zero && any_pos);
    }
    if (!(hi > 0.0))
      throw empty_likelihood_support("step " + std::to_string(j) +
                                     ": no positive likelihood within the allowed observations");
    const double c = lo / hi;
    out.positive_value *= c;
    out.support_gap = out.support_gap || gap;
    const double used = gap && mode == ck_mode::sound ? 0.0 : c;
    out.factors.push_back(used);
    out.value *= used;
    out.observation_sets.push_back(std::move(zs));
    out.reachable_sets.push_back(std::move(reach));
  }
  return out;
}

/// Top-m observations by positive predictive probability under the open-loop
/// propagated belief (ties to the lower index), returned in ascending order.
inline std::vector<observation_id> top_observations(const DiscretePomdp& model, const ExactBelief& propagated, int m) {
  auto pz = observation_distribution(model, propagated);
  std::vector<observation_id> idx;
  for (int z = 0; z < model.num_observations(); ++z)
    if (pz[z] > 0.0) idx.push_back(z);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return pz[a] > pz[b]; });
  if (static_cast<int>(idx.size()) > m) idx.resize(static_cast<std::size_t>(std::max(m, 0)));
  std::sort(idx.begin(), idx.end());
  return idx;
}

/// Topology below the open-loop chain `prefix`, re-rooted at its end.
inline Topology reroot(const Topology& tau, std::span<const action_id> prefix) {
  HistoryKey chain;
  for (action_id a : prefix) chain.push_back(act(a));
  Topology out(tau.default_beta());
  for (auto side : {bound_side::lower, bound_side::upper})
    for (const auto& [k, b] : tau.entries(side))
      if (has_prefix(k, chain)) out.set(side, HistoryKey(k.begin() + static_cast<std::ptrdiff_t>(chain.size()), k.end()), b);
  return out;
}

/// True when both assignments are simplified on every open-loop chain node of
/// the prefix, i.e. tau belongs to T^k along these actions.
inline bool in_open_loop_prefix_class(const Topology& tau, std::span<const action_id> prefix) {
  HistoryKey chain;
  for (action_id a : prefix) {
    if (tau.lower(chain) != simplified || tau.upper(chain) != simplified) return false;
    chain.push_back(act(a));
  }
  return true;
}

/// Value of the bound side at a belief with the first action fixed, horizon L.
using ContinuationFn = std::function<double(const ExactBelief&, action_id, const Topology&, int, bound_side)>;

inline ContinuationFn exact_continuation(const DiscretePomdp& model, std::size_t budget = default_node_budget) {
  return [&model, budget](const ExactBelief& b, action_id a, const Topology& tau, int horizon, bound_side side) {
    ExactOracle o(model, budget);
    return side == bound_side::lower ? o.aol_value(b, a, tau, horizon) : o.afo_value(b, a, tau, horizon);
  };
}

inline ContinuationFn sparse_continuation(const DiscretePomdp& model, SparseConfig config) {
  return [&model, config](const ExactBelief& b, action_id a, const Topology& tau, int horizon, bound_side side) {
    SparseConfig c = config;
    c.horizon = horizon;
    auto root = root_particles(b, c);
    return side == bound_side::lower ? estimate_lb(model, root, a, tau, c) : estimate_ub(model, root, a, tau, c);
  };
}

/// Sum of E[r(phi_i, a_i)] over the open-loop propagated beliefs phi_i.
inline double prefix_reward(const DiscretePomdp& model, ExactBelief b, std::span<const action_id> prefix) {
  double r = 0.0;
  for (action_id a : prefix) {
    r += expected_reward(model, b, a);
    b = propagate(model, b, a);
  }
  return r;
}

/**
 * Q-tilde over horizon L + k: the forced prefix a_{0:k-1} runs open-loop, then
 * a_k is taken and the chosen side's optimal policy follows for the remaining
 * steps of the L-step window.
 */
inline double q_tilde(const DiscretePomdp& model, const ExactBelief& b0, std::span<const action_id> forced,
                      action_id a_k, const Topology& tau, int horizon, bound_side side, const ContinuationFn& cont) {
  if (!in_open_loop_prefix_class(tau, forced))
    throw contract_violation("q_tilde: topology is not open-loop on the first k steps");
  ExactBelief phi = propagate_open_loop(model, b0, forced);
  return prefix_reward(model, b0, forced) + cont(phi, a_k, reroot(tau, forced), horizon, side);
}

struct FutureBound {
  BoundPair bound;
  LikelihoodRatioFactor ck;
  double prefix = 0.0;
  double q_aol = 0.0;  ///< Q-tilde, lower side
  double q_afo = 0.0;  ///< Q-tilde, upper side
};

/// Bounds on Q*(b_k, a_k) valid for every posterior b_k reached through
/// observations in the allowed sets. `actions` is a_{0:k}.
inline FutureBound future_bounds(const DiscretePomdp& model, const ExactBelief& b0, std::span<const action_id> actions,
                                 const Topology& tau, int horizon, const ObservationSets& sets,
                                 const ContinuationFn& cont, ck_mode mode = ck_mode::sound) {
  if (actions.empty()) throw contract_violation("future_bounds needs a_{0:k}");
  auto prefix = actions.first(actions.size() - 1);
  const action_id a_k = actions.back();
  FutureBound out;
  out.ck = compute_ck(model, b0, prefix, sets, mode);
  out.prefix = prefix_reward(model, b0, prefix);
  out.q_aol = q_tilde(model, b0, prefix, a_k, tau, horizon, bound_side::lower, cont);
  out.q_afo = q_tilde(model, b0, prefix, a_k, tau, horizon, bound_side::upper, cont);
  const double lo = out.q_aol - out.prefix, hi = out.q_afo - out.prefix;
  if (lo < 0.0 || hi < 0.0)
    throw positivity_violated("future bound residual is negative (" + fmt9(std::min(lo, hi)) +
                              "); configure a reward offset so that every reward is non-negative");
  const double c = out.ck.value;
  out.bound.action = a_k;
  out.bound.topology_id = tau.id();
  out.bound.lower = c * lo;
  out.bound.upper = c > 0.0 ? hi / c : std::numeric_limits<double>::infinity();
  return out;
}

enum class srg_step_status { separated, failed };

struct SrgStep {
  int index = 0;  ///< i in 1..k
  srg_step_status status = srg_step_status::failed;
  std::vector<observation_id> allowed;
  std::vector<BoundPair> bounds;
  double ck = 0.0;
  bool support_gap = false;
  std::string failure;  ///< reason when a step failed without bounds
};

struct SrgCertificate {
  int depth = 0;
  std::vector<action_id> actions;  ///< a*_{0:i} up to the last certified step
  std::vector<SrgStep> steps;
  bool empirical = false;  ///< bounds came from a sampling evaluator

  int certified_steps() const {
    int n = 0;
    for (const auto& s : steps) {
      if (s.status != srg_step_status::separated) break;
      ++n;
    }
    return n;
  }
  bool valid() const { return certified_steps() == depth; }
};

struct SrgOptions {
  int depth = 1;          ///< k
  int allowed_count = 4;  ///< m; negative selects the full observation space
  Topology topology = Topology::fully_open_loop();
  int horizon = 3;
  double slack = 0.0;
  ck_mode mode = ck_mode::sound;
  bool empirical = false;
};

/**
 * Checks steps i = 1..k in order. Step i builds its allowed set from the
 * belief propagated along the certified actions a*_{0:i-1}, bounds every
 * candidate a_i and stops at the first overlap.
 */
inline SrgCertificate check_srg(const DiscretePomdp& model, const ExactBelief& b0, action_id a0, const SrgOptions& opt,
                                const ContinuationFn& cont) {
  SrgCertificate cert;
  cert.depth = opt.depth;
  cert.empirical = opt.empirical;
  cert.actions.push_back(a0);
  ObservationSets sets;
  ExactBelief phi = b0;
  for (int i = 1; i <= opt.depth; ++i) {
    SrgStep step;
    step.index = i;
    phi = propagate(model, phi, cert.actions.back());
    if (opt.allowed_count >= 0) {
      step.allowed = top_observations(model, phi, opt.allowed_count);
    } else {
      step.allowed.resize(static_cast<std::size_t>(model.num_observations()));
      for (int z = 0; z < model.num_observations(); ++z) step.allowed[z] = z;
    }
    sets.push_back(step.allowed);
    try {
      std::vector<action_id> seq = cert.actions;
      seq.push_back(0);
      for (int a = 0; a < model.num_actions(); ++a) {
        seq.back() = a;
        auto fb = future_bounds(model, b0, seq, opt.topology, opt.horizon, sets, cont, opt.mode);
        step.ck = fb.ck.value;
        step.support_gap = fb.ck.support_gap;
        step.bounds.push_back(fb.bound);
      }
      auto sep = check_separation(step.bounds, opt.slack);
      if (sep.separated()) {
        step.status = srg_step_status::separated;
        cert.actions.push_back(sep.optimal_action);
      }
    } catch (const planning_error& e) {
      step.failure = e.what();
    }
    const bool ok = step.status == srg_step_status::separated;
    cert.steps.push_back(std::move(step));
    if (!ok) break;
  }
  return cert;
}

// ---------------------------------------------------------------------------
// Execution loop
// ---------------------------------------------------------------------------

struct PlanOutcome {
  action_id action = 0;
  bool guaranteed = false;
  int refinements = 0;  ///< topology refinements (or search transitions) spent on this decision
};

using Planner = std::function<PlanOutcome(const ExactBelief&)>;

/// Certified planning at every decision point with the exact evaluator.
inline Planner exact_guaranteed_planner(const DiscretePomdp& model, int horizon, PlanOptions options = {},
                                        Topology initial = Topology::fully_open_loop()) {
  return [&model, horizon, options, initial](const ExactBelief& b) {
    ExactBoundEvaluator ev(model, b, horizon);
    auto r = plan_with_guarantees(ev, initial, options);
    return PlanOutcome{r.action, r.guaranteed, r.refinements};
  };
}

struct SkipConfig {
  bool enabled = true;
  SrgOptions srg;
  int max_steps = 5;
  /// Declared duration of one action execution in seconds. A certificate that
  /// takes longer to compute is late and is discarded. 0 never discards.
  double execution_time = 0.0;
};

struct TraceRow {
  int step = 0;
  action_id action = 0;
  observation_id observation = 0;
  bool in_allowed = false;  ///< the observation lies in the allowed set of the next certified step
  bool skipped = false;     ///< the action was taken without replanning
  double reward = 0.0;
  double cumulative = 0.0;
  double planning_time = 0.0;  ///< seconds
  double srg_time = 0.0;       ///< seconds
};

struct EpisodeResult {
  std::vector<TraceRow> trace;
  double total_reward = 0.0;
  int steps = 0;
  int skipped = 0;
  int plans = 0;
  int unguaranteed_plans = 0;
  int late_certificates = 0;
  int refinements = 0;
  bool empirical_skips = false;
  double planning_time = 0.0;
  double srg_time = 0.0;

  double skip_ratio() const { return steps ? static_cast<double>(skipped) / steps : 0.0; }
};

inline void write_trace(std::ostream& os, std::span<const TraceRow> rows, bool timing) {
  os << "step,action,observation,in_zbar,skipped,reward,cumulative";
  if (timing) os << ",planning_time,srg_time";
  os << "\n";
  for (const auto& r : rows) {
    os << r.step << "," << r.action << "," << r.observation << "," << (r.in_allowed ? 1 : 0) << ","
       << (r.skipped ? 1 : 0) << "," << fmt9(r.reward) << "," << fmt9(r.cumulative);
    if (timing) os << "," << fmt9(r.planning_time) << "," << fmt9(r.srg_time);
    os << "\n";
  }
}

/**
 * Plans at the current belief; while the environment executes the chosen
 * action the SRG check for the following steps runs as a separate task. After
 * the observation arrives, certified steps whose observations stayed inside the
 * allowed sets are executed without replanning. The belief is always updated
 * exactly, so skipping never loses information.
 */
inline EpisodeResult execute_with_skipping(const DiscretePomdp& model, Environment& env, const Planner& planner,
                                           const SkipConfig& cfg, const ContinuationFn& cont) {
  using clock = std::chrono::steady_clock;
  EpisodeResult out;
  ExactBelief belief = ExactBelief::initial(model);
  std::optional<SrgCertificate> cert;
  int cert_pos = 0;  ///< index of the next certificate step to consume
  for (int t = 0; t < cfg.max_steps && !env.done(); ++t) {
    TraceRow row;
    row.step = t;
    std::future<std::pair<SrgCertificate, double>> pending;
    bool use_cert = cert && cert_pos < cert->certified_steps();
    if (use_cert) {
      row.action = cert->actions[static_cast<std::size_t>(cert_pos) + 1];
      row.skipped = true;
      ++cert_pos;
      ++out.skipped;
    } else {
      cert.reset();
      cert_pos = 0;
      auto t0 = clock::now();
      PlanOutcome p = planner(belief);
      row.planning_time = std::chrono::duration<double>(clock::now() - t0).count();
      row.action = p.action;
      ++out.plans;
      out.unguaranteed_plans += !p.guaranteed;
      out.refinements += p.refinements;
      if (cfg.enabled && cfg.srg.depth > 0 && p.guaranteed) {
        pending = std::async(std::launch::async, [&, snapshot = belief, a0 = p.action] {
          auto s0 = clock::now();
          auto c = check_srg(model, snapshot, a0, cfg.srg, cont);
          return std::make_pair(std::move(c), std::chrono::duration<double>(clock::now() - s0).count());
        });
      }
    }
    StepResult sr = env.step(row.action);
    if (pending.valid()) {
      auto [c, secs] = pending.get();
      cert = std::move(c);
      row.srg_time = secs;
      out.srg_time += secs;
      if (cfg.execution_time > 0.0 && secs > cfg.execution_time) {
        cert.reset();
        ++out.late_certificates;
      }
    }
    belief = exact_bayes_update(model, belief, row.action, sr.observation).posterior;
    row.observation = sr.observation;
    row.reward = sr.reward;
    out.total_reward += sr.reward;
    row.cumulative = out.total_reward;
    if (cert && cert_pos < cert->certified_steps()) {
      const auto& allowed = cert->steps[static_cast<std::size_t>(cert_pos)].allowed;
      row.in_allowed = std::binary_search(allowed.begin(), allowed.end(), sr.observation);
      if (!row.in_allowed) cert.reset();
    }
    out.empirical_skips = out.empirical_skips || (row.skipped && cfg.srg.empirical);
    out.planning_time += row.planning_time;
    out.trace.push_back(row);
    ++out.steps;
  }
  return out;
}

}  // namespace aol
