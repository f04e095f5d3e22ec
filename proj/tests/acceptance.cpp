// One line per acceptance criterion, PASS or FAIL, followed by the measured
// quantities. Thresholds live in this file; the experiment protocols come from
// the shipped configs so that what is checked is what a user would run.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "aol/belief_tree.hpp"
#include "aol/bench/config.hpp"
#include "aol/bench/experiment.hpp"
#include "aol/bench/oracle_suite.hpp"
#include "aol/exact_oracle.hpp"
#include "aol/format.hpp"
#include "aol/pomcp.hpp"
#include "aol/random_models.hpp"
#include "aol/sparse_pft.hpp"

using namespace aol;
using namespace aol::bench;

namespace {

constexpr double kExactTol = 1e-9;
constexpr int kTinyInstances = 50;
constexpr int kPositiveInstances = 20;
constexpr double kSandwichSeconds = 60.0;
constexpr double kTrendSeconds = 300.0;
constexpr double kTable2Seconds = 900.0;
constexpr double kSpeedupMin = 3.0;
constexpr double kPomcpValueFraction = 0.05;
constexpr int kPomcpSeedsNeeded = 18;
constexpr double kSkipRatioMin = 0.10;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string config_path(const std::string& name) { return std::string(AOL_SOURCE_DIR) + "/configs/" + name; }

double quantile(std::vector<double> xs, double q) {
  std::sort(xs.begin(), xs.end());
  const double pos = q * static_cast<double>(xs.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, xs.size() - 1);
  return xs[lo] + (pos - static_cast<double>(lo)) * (xs[hi] - xs[lo]);
}

std::string describe(const PropertyResult& p) {
  std::ostringstream os;
  os << p.checks << " checks, " << p.violations << " violations";
  if (!p.counterexamples.empty()) os << " (first: " << p.counterexamples.front() << ")";
  return os.str();
}

SuiteOptions tiny_suite(int n) {
  SuiteOptions o;
  o.instances = n;
  o.tolerance = kExactTol;
  return o;
}

Outcome sandwich() {
  auto p = check_sandwich(tiny_suite(kTinyInstances));
  std::ostringstream os;
  os << describe(p) << ", " << fmt9(p.seconds) << " s";
  return {p.passed() && p.checks > 0 && p.seconds < kSandwichSeconds, os.str()};
}

Outcome monotonicity() {
  auto p = check_monotonicity(tiny_suite(kTinyInstances));
  return {p.passed() && p.checks > 0, describe(p)};
}

Outcome guaranteed_action() {
  auto p = check_guaranteed_action(tiny_suite(kTinyInstances));
  std::ostringstream os;
  os << describe(p) << ", " << p.vacuous << " instances not separated";
  return {p.passed() && p.checks > 0, os.str()};
}

/// Fixed tiny instance and mixed topology; C = N = N^O.
Outcome error_trend() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto model = random_tiny_pomdp(7);
  const auto b = ExactBelief::initial(model);
  const int L = model.horizon();
  const auto tau = random_mixed_topology(model, L, 7);
  ExactOracle oracle(model);
  std::vector<double> lo_exact, hi_exact;
  for (int a = 0; a < model.num_actions(); ++a) {
    lo_exact.push_back(oracle.aol_value(b, a, tau, L));
    hi_exact.push_back(oracle.afo_value(b, a, tau, L));
  }
  std::vector<double> lq, uq;
  for (int c : {5, 20, 80}) {
    std::vector<double> le, ue;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      SparseConfig sc;
      sc.num_particles = c;
      sc.num_observations = c;
      sc.horizon = L;
      sc.seed = seed;
      auto root = root_particles(b, sc);
      auto ev = solve_root(model, root, tau, sc);
      double worst_l = 0.0, worst_u = 0.0;
      for (int a = 0; a < model.num_actions(); ++a) {
        worst_l = std::max(worst_l, std::abs(ev.bounds[a].lower - lo_exact[a]));
        worst_u = std::max(worst_u, std::abs(ev.bounds[a].upper - hi_exact[a]));
      }
      le.push_back(worst_l);
      ue.push_back(worst_u);
    }
    lq.push_back(quantile(le, 0.9));
    uq.push_back(quantile(ue, 0.9));
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool mono = lq[0] >= lq[1] && lq[1] >= lq[2] && uq[0] >= uq[1] && uq[1] >= uq[2];
  std::ostringstream os;
  os << "q90 |lb err| " << fmt9(lq[0]) << " / " << fmt9(lq[1]) << " / " << fmt9(lq[2]) << ", q90 |ub err| "
     << fmt9(uq[0]) << " / " << fmt9(uq[1]) << " / " << fmt9(uq[2]) << " at C = 5 / 20 / 80, " << fmt9(secs) << " s";
  return {mono && secs < kTrendSeconds, os.str()};
}

/// Root value of AT-POMCP against V* on tiny instances 0, 1, 2.
Outcome pomcp_convergence() {
  std::ostringstream os;
  bool pass = true;
  for (std::uint64_t inst : {0, 1, 2}) {
    const auto model = random_tiny_pomdp(inst);
    const auto b = ExactBelief::initial(model);
    const int L = model.horizon();
    const double v_star = ExactOracle(model).v_star(b, L);
    const double v_max = L * model.max_abs_reward();
    int within = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      PomcpConfig pc;
      pc.horizon = L;
      pc.max_simulations = 10'000;
      pc.ucb_c = v_max;
      pc.pw_k = 10;
      pc.seed = seed;
      auto r = pomcp_search(model, b, pc);
      within += std::abs(r.value - v_star) <= kPomcpValueFraction * v_max;
    }
    pass = pass && within >= kPomcpSeedsNeeded;
    os << (inst ? ", " : "") << "instance " << inst << ": " << within << "/20 within " << fmt9(kPomcpValueFraction * v_max);
  }
  return {pass, os.str()};
}

Outcome future_bound_sandwich() {
  auto p = check_future_bounds(tiny_suite(kPositiveInstances));
  return {p.passed() && p.checks > 0, describe(p)};
}

Outcome skip_optimality() {
  auto p = check_skip_optimality(tiny_suite(kPositiveInstances));
  std::ostringstream os;
  os << describe(p) << ", " << kPositiveInstances - p.vacuous << "/" << kPositiveInstances
     << " models with a certified step";
  return {p.passed() && p.checks > 0, os.str()};
}

std::string returns_line(const RunSummary& s) {
  std::ostringstream os;
  os << "treatment " << fmt9(s.treatment.return_stats.mean) << " vs baseline " << fmt9(s.baseline->return_stats.mean)
     << ", diff " << fmt9(s.mean_return_difference) << ", pooled std " << fmt9(s.pooled_std);
  return os.str();
}

bool clean(const RunSummary& s) { return s.treatment.failures() == 0 && s.baseline && s.baseline->failures() == 0; }

Outcome table2_sparse() {
  const auto t0 = std::chrono::steady_clock::now();
  auto s = run_experiment(load_config(config_path("beacon_sparse.toml")), false);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::ostringstream os;
  os << "speedup " << fmt9(s.speedup) << ", " << returns_line(s) << ", " << fmt9(secs) << " s";
  const bool pass = clean(s) && s.speedup > kSpeedupMin && std::abs(s.mean_return_difference) <= s.pooled_std &&
                    secs < kTable2Seconds;
  return {pass, os.str()};
}

Outcome table3_pomcp() {
  std::ostringstream os;
  bool pass = true;
  for (const char* name : {"beacon_pomcp_50ms.toml", "beacon_pomcp_200ms.toml"}) {
    auto cfg = load_config(config_path(name));
    auto s = run_experiment(cfg, false);
    pass = pass && clean(s) && s.treatment.return_stats.mean >= s.baseline->return_stats.mean;
    os << (os.tellp() > 0 ? "; " : "") << fmt9(cfg.solver.budget_ms) << " ms: " << returns_line(s);
  }
  return {pass, os.str()};
}

Outcome table5_skip() {
  auto s = run_experiment(load_config(config_path("tunnel_skip.toml")), false);
  std::ostringstream os;
  os << "skip ratio " << fmt9(s.treatment.skip_ratio()) << ", " << returns_line(s);
  const bool pass = clean(s) && s.treatment.skip_ratio() > kSkipRatioMin &&
                    std::abs(s.mean_return_difference) <= s.pooled_std;
  return {pass, os.str()};
}

DiscretePomdp dense_model(int nz) {
  DiscretePomdp m(4, 3, nz, 3);
  auto rng = make_stream(11, {static_cast<std::uint64_t>(nz)});
  std::uniform_real_distribution<double> u(0.1, 1.0);
  auto row = [&](int n) {
    std::vector<double> r(static_cast<std::size_t>(n));
    double sum = 0.0;
    for (auto& p : r) sum += (p = u(rng));
    for (auto& p : r) p /= sum;
    return r;
  };
  for (int s = 0; s < 4; ++s) {
    for (int a = 0; a < 3; ++a) {
      auto t = row(4);
      for (int x = 0; x < 4; ++x) m.set_transition(s, a, x, t[static_cast<std::size_t>(x)]);
      m.set_reward(s, a, u(rng));
    }
    auto o = row(nz);
    for (int z = 0; z < nz; ++z) m.set_observation(s, z, o[static_cast<std::size_t>(z)]);
  }
  m.set_initial_belief(row(4));
  m.finalize();
  return m;
}

Outcome open_loop_complexity() {
  std::ostringstream os;
  bool pass = true;
  for (int nz : {2, 8}) {
    auto m = dense_model(nz);
    auto b = ExactBelief::initial(m);
    auto ol = BeliefTree::build(m, b, Topology::fully_open_loop(), bound_side::lower, 3);
    auto cl = BeliefTree::build(m, b, Topology::fully_closed_loop(), bound_side::lower, 3);
    os << (nz == 2 ? "" : "; ") << "|Z| = " << nz << ": open-loop";
    for (int d = 0; d <= 3; ++d) {
      const auto n = ol.count_at_depth(d);
      pass = pass && n == static_cast<std::size_t>(std::pow(3, d));
      os << " " << n;
    }
    os << " (closed-loop depth 3: " << cl.count_at_depth(3) << ")";
  }
  return {pass, os.str()};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"1 sandwich on 50 tiny models x 3 topologies", sandwich},
      {"2 refinements never loosen, closed loop gives Q*", monotonicity},
      {"3 guaranteed action maximises Q*", guaranteed_action},
      {"4 sampled bound error shrinks with C", error_trend},
      {"5 AT-POMCP root value converges", pomcp_convergence},
      {"6 future bounds bracket Q* and nest", future_bound_sandwich},
      {"7 certified skips are optimal", skip_optimality},
      {"8 sparse speedup on 10x10 beacon", table2_sparse},
      {"9 AT-POMCP >= POMCP at 50 and 200 ms", table3_pomcp},
      {"10 tunnel skip ratio", table5_skip},
      {"11 open-loop node count is |A|^d", open_loop_complexity},
  };
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
  }
  std::cout << criteria.size() - static_cast<std::size_t>(failed) << "/" << criteria.size() << " criteria passed"
            << std::endl;
  return failed ? 1 : 0;
}
