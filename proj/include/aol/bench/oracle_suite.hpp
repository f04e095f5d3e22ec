#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "aol/bounds.hpp"
#include "aol/exact_oracle.hpp"
#include "aol/format.hpp"
#include "aol/random_models.hpp"
#include "aol/rng.hpp"
#include "aol/skip_replan.hpp"

namespace aol::bench {

struct PropertyResult {
  std::string name;
  long checks = 0;
  long violations = 0;
  long vacuous = 0;  ///< instances where the property had nothing to check
  std::vector<std::string> counterexamples;
  double seconds = 0.0;

  bool passed() const { return violations == 0; }
  void fail(std::string what) {
    ++violations;
    if (counterexamples.size() < 20) counterexamples.push_back(std::move(what));
  }
};

struct SuiteOptions {
  std::uint64_t seed = 0;
  int instances = 50;
  bool inject_bug = false;  ///< swap lower and upper bounds to check that the suite notices
  double tolerance = 1e-9;
};

/// Instance i of the suite: a random tiny model.
inline DiscretePomdp suite_model(const SuiteOptions& o, int i) {
  return random_tiny_pomdp(derive_seed(o.seed, {0x5eed, static_cast<std::uint64_t>(i)}));
}

/// Instance i with strictly positive observations and rewards, for the
/// multiplicative future bounds. Flatter observation rows (lower sharpness)
/// push the likelihood-ratio factor toward 1, which is what lets the
/// skip check certify anything at all.
inline DiscretePomdp suite_positive_model(const SuiteOptions& o, int i, double sharpness = 0.3) {
  TinyModelOptions opts;
  opts.positive_observations = true;
  opts.positive_rewards = true;
  opts.observation_sharpness = sharpness;
  return random_tiny_pomdp(derive_seed(o.seed, {0x9051, static_cast<std::uint64_t>(i)}), opts);
}

namespace detail {

inline std::string describe_instance(const char* what, int i, int a, double lb, double q, double ub) {
  std::ostringstream os;
  os << what << " instance " << i << " action " << a << ": lb " << fmt9(lb) << " q* " << fmt9(q) << " ub " << fmt9(ub);
  return os.str();
}

struct Timer {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); }
};

inline std::vector<BoundPair> exact_bounds(const DiscretePomdp& m, const ExactBelief& b, const Topology& tau, int L,
                                           bool swap) {
  ExactOracle o(m);
  std::vector<BoundPair> out;
  for (int a = 0; a < m.num_actions(); ++a) {
    BoundPair p{o.aol_value(b, a, tau, L), o.afo_value(b, a, tau, L), a, tau.id(), std::nullopt};
    if (swap) std::swap(p.lower, p.upper);
    out.push_back(std::move(p));
  }
  return out;
}

/// Topology that is simplified on the chain of `prefix` and random elsewhere.
inline Topology open_chain_topology(const DiscretePomdp& m, std::span<const action_id> prefix, int horizon,
                                    std::uint64_t seed) {
  Topology tau = random_mixed_topology(m, horizon, seed);
  HistoryKey chain;
  for (action_id a : prefix) {
    tau.set(chain, simplified);
    chain.push_back(act(a));
  }
  return tau;
}

/// Every action sequence of the given length.
inline std::vector<std::vector<action_id>> action_sequences(int num_actions, int length) {
  std::vector<std::vector<action_id>> out{{}};
  for (int d = 0; d < length; ++d) {
    std::vector<std::vector<action_id>> next;
    for (const auto& s : out)
      for (int a = 0; a < num_actions; ++a) {
        auto t = s;
        t.push_back(a);
        next.push_back(std::move(t));
      }
    out = std::move(next);
  }
  return out;
}

/// Calls fn(posterior) for every observation sequence drawn from `sets` that
/// has positive probability under the actions.
inline void for_each_posterior(const DiscretePomdp& m, const ExactBelief& b0, std::span<const action_id> actions,
                               const ObservationSets& sets, const std::function<void(const ExactBelief&)>& fn) {
  std::function<void(std::size_t, const ExactBelief&)> rec = [&](std::size_t j, const ExactBelief& b) {
    if (j == sets.size()) {
      fn(b);
      return;
    }
    for (observation_id z : sets[j]) {
      auto r = exact_bayes_update(m, b, actions[j], z);
      if (r.predictive > 0.0) rec(j + 1, r.posterior);
    }
  };
  rec(0, b0);
}

}  // namespace detail

/// lb <= Q* <= ub at the root for open-loop, closed-loop and one mixed topology.
inline PropertyResult check_sandwich(const SuiteOptions& o) {
  detail::Timer t;
  PropertyResult r;
  r.name = "sandwich";
  for (int i = 0; i < o.instances; ++i) {
    auto m = suite_model(o, i);
    auto b = ExactBelief::initial(m);
    const int L = m.horizon();
    auto q = ExactOracle(m).q_star_all(b, L);
    const Topology taus[] = {Topology::fully_open_loop(), Topology::fully_closed_loop(),
                             random_mixed_topology(m, L, derive_seed(o.seed, {0x70b0, static_cast<std::uint64_t>(i)}))};
    for (const auto& tau : taus) {
      auto bounds = detail::exact_bounds(m, b, tau, L, o.inject_bug);
      for (int a = 0; a < m.num_actions(); ++a) {
        ++r.checks;
        if (bounds[a].lower > q[a] + o.tolerance || bounds[a].upper < q[a] - o.tolerance)
          r.fail(detail::describe_instance("sandwich", i, a, bounds[a].lower, q[a], bounds[a].upper));
      }
    }
  }
  r.seconds = t.seconds();
  return r;
}

/// Single-node refinements never loosen a bound; refining to the end (and the
/// fully closed-loop topology directly) gives lb = ub = Q*.
inline PropertyResult check_monotonicity(const SuiteOptions& o) {
  detail::Timer t;
  PropertyResult r;
  r.name = "monotonicity";
  for (int i = 0; i < o.instances; ++i) {
    auto m = suite_model(o, i);
    auto b = ExactBelief::initial(m);
    const int L = m.horizon();
    auto q = ExactOracle(m).q_star_all(b, L);
    auto rng = make_stream(o.seed, {0x3030, static_cast<std::uint64_t>(i)});
    Topology tau = Topology::fully_open_loop();
    auto cur = detail::exact_bounds(m, b, tau, L, o.inject_bug);
    for (int guard = 0; guard < 1000; ++guard) {
      ExactBoundEvaluator ev(m, b, L);
      auto cands = ev.evaluate(tau).candidates;
      std::sort(cands.begin(), cands.end(), candidate_order);
      cands.erase(std::unique(cands.begin(), cands.end()), cands.end());
      if (cands.empty()) break;
      std::vector<std::vector<BoundPair>> after;
      std::vector<Topology> next;
      for (const auto& c : cands) {
        auto tr = refine_topology(tau, std::vector<HistoryKey>{c.key}, m.num_observations());
        auto nb = detail::exact_bounds(m, b, tr.topology, L, o.inject_bug);
        for (int a = 0; a < m.num_actions(); ++a) {
          ++r.checks;
          if (nb[a].lower < cur[a].lower - o.tolerance || nb[a].upper > cur[a].upper + o.tolerance) {
            std::ostringstream os;
            os << "instance " << i << " flipping " << to_string(c.key) << " action " << a << ": [" << fmt9(cur[a].lower)
               << ", " << fmt9(cur[a].upper) << "] -> [" << fmt9(nb[a].lower) << ", " << fmt9(nb[a].upper) << "]";
            r.fail(os.str());
          }
        }
        after.push_back(std::move(nb));
        next.push_back(std::move(tr.topology));
      }
      std::uniform_int_distribution<std::size_t> pick(0, next.size() - 1);
      const std::size_t k = pick(rng);
      tau = next[k];
      cur = after[k];
    }
    for (const auto& [label, bounds] : {std::pair{"refined", cur},
                                        std::pair{"closed", detail::exact_bounds(m, b, Topology::fully_closed_loop(), L,
                                                                                 o.inject_bug)}}) {
      for (int a = 0; a < m.num_actions(); ++a) {
        ++r.checks;
        if (bounds[a].lower != bounds[a].upper || std::abs(bounds[a].lower - q[a]) > o.tolerance)
          r.fail(detail::describe_instance(label, i, a, bounds[a].lower, q[a], bounds[a].upper));
      }
    }
  }
  r.seconds = t.seconds();
  return r;
}

/// Whenever planning reports separation, its action maximises Q*.
inline PropertyResult check_guaranteed_action(const SuiteOptions& o) {
  detail::Timer t;
  PropertyResult r;
  r.name = "guaranteed_action";
  for (int i = 0; i < o.instances; ++i) {
    auto m = suite_model(o, i);
    auto b = ExactBelief::initial(m);
    const int L = m.horizon();
    auto q = ExactOracle(m).q_star_all(b, L);
    const double best = *std::max_element(q.begin(), q.end());
    ExactBoundEvaluator ev(m, b, L);
    PlanOptions opt;
    opt.max_refinements = 64;
    auto p = plan_with_guarantees(ev, Topology::fully_open_loop(), opt);
    if (!p.guaranteed) {
      ++r.vacuous;
      continue;
    }
    ++r.checks;
    action_id chosen = p.action;
    if (o.inject_bug) {
      // report the action with the smallest lower bound instead
      chosen = 0;
      for (int a = 1; a < m.num_actions(); ++a)
        if (p.final_bounds[a].lower < p.final_bounds[chosen].lower) chosen = a;
    }
    if (q[chosen] < best) {
      std::ostringstream os;
      os << "instance " << i << ": certified action " << chosen << " has Q* " << fmt9(q[chosen]) << " < " << fmt9(best);
      r.fail(os.str());
    }
  }
  r.seconds = t.seconds();
  return r;
}

/// Future bounds bracket Q* at every posterior reachable through the allowed
/// observations, and restricting the observations never loosens them.
inline PropertyResult check_future_bounds(const SuiteOptions& o, int allowed = 2) {
  detail::Timer t;
  PropertyResult r;
  r.name = "future_bounds";
  for (int i = 0; i < o.instances; ++i) {
    auto m = suite_positive_model(o, i);
    auto b0 = ExactBelief::initial(m);
    const int L = m.horizon();
    auto cont = exact_continuation(m);
    ExactOracle oracle(m);
    for (int k = 1; k <= 2; ++k) {
      for (const auto& prefix : detail::action_sequences(m.num_actions(), k)) {
        ObservationSets sets;
        ExactBelief phi = b0;
        for (action_id a : prefix) {
          phi = propagate(m, phi, a);
          sets.push_back(top_observations(m, phi, allowed));
        }
        const Topology taus[] = {
            Topology::fully_open_loop(),
            detail::open_chain_topology(m, prefix, L, derive_seed(o.seed, {0x7a0, static_cast<std::uint64_t>(i)}))};
        for (const auto& tau : taus) {
          for (int ak = 0; ak < m.num_actions(); ++ak) {
            auto seq = prefix;
            seq.push_back(ak);
            auto restricted = future_bounds(m, b0, seq, tau, L, sets, cont);
            auto full = future_bounds(m, b0, seq, tau, L, {}, cont);
            double lb = restricted.bound.lower, ub = restricted.bound.upper;
            if (o.inject_bug) std::swap(lb, ub);
            ++r.checks;
            if (restricted.bound.lower < full.bound.lower - o.tolerance ||
                restricted.bound.upper > full.bound.upper + o.tolerance) {
              std::ostringstream os;
              os << "nesting instance " << i << " k " << k << ": restricted [" << fmt9(restricted.bound.lower) << ", "
                 << fmt9(restricted.bound.upper) << "] full [" << fmt9(full.bound.lower) << ", "
                 << fmt9(full.bound.upper) << "]";
              r.fail(os.str());
            }
            detail::for_each_posterior(m, b0, prefix, sets, [&](const ExactBelief& post) {
              const double q = oracle.q_star(post, ak, L);
              ++r.checks;
              if (lb > q + o.tolerance || ub < q - o.tolerance)
                r.fail(detail::describe_instance("future bound", i, ak, lb, q, ub));
            });
          }
        }
      }
    }
  }
  r.seconds = t.seconds();
  return r;
}

/// Whenever a step is certified and the realised observations are allowed,
/// the certified action maximises Q* at the realised posterior.
inline PropertyResult check_skip_optimality(const SuiteOptions& o, int depth = 2, int allowed = 2,
                                            double sharpness = 0.05) {
  detail::Timer t;
  PropertyResult r;
  r.name = "skip_optimality";
  for (int i = 0; i < o.instances; ++i) {
    auto m = suite_positive_model(o, i, sharpness);
    auto b0 = ExactBelief::initial(m);
    const int L = m.horizon();
    auto cont = exact_continuation(m);
    ExactOracle oracle(m);
    bool any = false;
    for (int a0 = 0; a0 < m.num_actions(); ++a0) {
      SrgOptions opt;
      opt.depth = depth;
      opt.allowed_count = allowed;
      opt.horizon = L;
      auto cert = check_srg(m, b0, a0, opt, cont);
      for (int step = 1; step <= cert.certified_steps(); ++step) {
        any = true;
        std::span<const action_id> taken(cert.actions.data(), static_cast<std::size_t>(step));
        ObservationSets sets;
        for (int j = 0; j < step; ++j) sets.push_back(cert.steps[static_cast<std::size_t>(j)].allowed);
        action_id certified = cert.actions[static_cast<std::size_t>(step)];
        detail::for_each_posterior(m, b0, taken, sets, [&](const ExactBelief& post) {
          auto q = oracle.q_star_all(post, L);
          const double best = *std::max_element(q.begin(), q.end());
          action_id chosen = certified;
          if (o.inject_bug) chosen = static_cast<action_id>(std::min_element(q.begin(), q.end()) - q.begin());
          ++r.checks;
          if (q[chosen] < best - 1e-12) {
            std::ostringstream os;
            os << "instance " << i << " a0 " << a0 << " step " << step << ": certified " << chosen << " Q* "
               << fmt9(q[chosen]) << " < " << fmt9(best);
            r.fail(os.str());
          }
        });
      }
    }
    if (!any) ++r.vacuous;
  }
  r.seconds = t.seconds();
  return r;
}

struct OracleReport {
  std::vector<PropertyResult> properties;
  std::vector<std::string> warnings;
  bool passed() const {
    return std::all_of(properties.begin(), properties.end(), [](const auto& p) { return p.passed(); });
  }
};

inline OracleReport run_oracle_suite(const SuiteOptions& o) {
  OracleReport rep;
  if (o.instances <= 0) {
    rep.warnings.push_back("instance count is 0: every property holds vacuously");
    return rep;
  }
  rep.properties.push_back(check_sandwich(o));
  rep.properties.push_back(check_monotonicity(o));
  rep.properties.push_back(check_guaranteed_action(o));
  rep.properties.push_back(check_future_bounds(o));
  rep.properties.push_back(check_skip_optimality(o));
  return rep;
}

inline void write_report(std::ostream& os, const OracleReport& rep) {
  for (const auto& w : rep.warnings) os << "warning: " << w << "\n";
  for (const auto& p : rep.properties) {
    os << (p.passed() ? "PASS " : "FAIL ") << p.name << ": " << p.checks << " checks, " << p.violations
       << " violations, " << p.vacuous << " vacuous instances\n";
    for (const auto& c : p.counterexamples) os << "  " << c << "\n";
  }
  os << (rep.passed() ? "oracle suite passed" : "oracle suite FAILED") << "\n";
}

}  // namespace aol::bench
