#include <gtest/gtest.h>

#include "aol/envs.hpp"
#include "aol/exact_oracle.hpp"
#include "aol/random_models.hpp"
#include "aol/sparse_pft.hpp"

using namespace aol;

namespace {

SparseConfig cfg(int n, int no, int horizon, std::uint64_t seed = 1) {
  SparseConfig c;
  c.num_particles = n;
  c.num_observations = no;
  c.horizon = horizon;
  c.seed = seed;
  return c;
}

}  // namespace

TEST(SparseConfig, RejectsNonPositiveCounts) {
  EXPECT_THROW(cfg(0, 4, 3).validate(), contract_violation);
  EXPECT_THROW(cfg(4, 0, 3).validate(), contract_violation);
  EXPECT_THROW(cfg(4, 4, 0).validate(), contract_violation);
  EXPECT_EQ(cfg(8, 5, 2).c(), 5);
}

TEST(SparsePft, ClosedLoopSidesCoincideBitwise) {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    auto m = random_tiny_pomdp(seed);
    auto c = cfg(24, 12, m.horizon(), seed);
    auto root = root_particles(ExactBelief::initial(m), c);
    for (int a = 0; a < m.num_actions(); ++a) {
      double lo = estimate_lb(m, root, a, Topology::fully_closed_loop(), c);
      double hi = estimate_ub(m, root, a, Topology::fully_closed_loop(), c);
      EXPECT_EQ(lo, hi) << "seed " << seed;
    }
  }
}

TEST(SparsePft, HorizonOneIsTheParticleReward) {
  auto m = random_tiny_pomdp(5);
  auto c = cfg(50, 10, 1);
  auto root = root_particles(ExactBelief::initial(m), c);
  for (int a = 0; a < m.num_actions(); ++a) {
    EXPECT_DOUBLE_EQ(estimate_lb(m, root, a, Topology::fully_open_loop(), c), root.expected_reward(m, a));
    EXPECT_DOUBLE_EQ(estimate_ub(m, root, a, Topology::fully_open_loop(), c), root.expected_reward(m, a));
  }
}

TEST(SparsePft, ConvergesToExactValues) {
  // large sample counts against the enumerating oracle, all three tree shapes
  for (std::uint64_t seed = 30; seed < 34; ++seed) {
    auto m = random_tiny_pomdp(seed);
    auto b = ExactBelief::initial(m);
    const int L = m.horizon();
    auto c = cfg(6000, 6000, L, seed);
    auto root = root_particles(b, c);
    auto mixed = random_mixed_topology(m, L, seed);
    for (const auto& tau : {Topology::fully_open_loop(), mixed, Topology::fully_closed_loop()}) {
      for (int a = 0; a < m.num_actions(); ++a) {
        EXPECT_NEAR(estimate_lb(m, root, a, tau, c), exact_aol_value(m, b, a, tau, L), 0.08) << "seed " << seed;
        EXPECT_NEAR(estimate_ub(m, root, a, tau, c), exact_afo_value(m, b, a, tau, L), 0.08) << "seed " << seed;
      }
    }
  }
}

TEST(SparsePft, DeterministicForAFixedSeed) {
  auto m = random_tiny_pomdp(11);
  auto c = cfg(16, 16, m.horizon(), 99);
  auto root = root_particles(ExactBelief::initial(m), c);
  auto tau = random_mixed_topology(m, m.horizon(), 3);
  auto e1 = solve_root(m, root, tau, c);
  auto e2 = solve_root(m, root, tau, c);
  for (int a = 0; a < m.num_actions(); ++a) {
    EXPECT_EQ(e1.bounds[a].lower, e2.bounds[a].lower);
    EXPECT_EQ(e1.bounds[a].upper, e2.bounds[a].upper);
    // the concurrent solve agrees with one-off estimates
    EXPECT_EQ(e1.bounds[a].lower, estimate_lb(m, root, a, tau, c));
    EXPECT_EQ(e1.bounds[a].upper, estimate_ub(m, root, a, tau, c));
    ASSERT_TRUE(e1.bounds[a].estimated());
    EXPECT_EQ(e1.bounds[a].estimation->c, 16);
  }
}

TEST(SparsePft, CacheReturnsIdenticalBoundsAndCountsHits) {
  auto m = tiger_pomdp(3);
  auto c = cfg(32, 16, 3, 4);
  SparseBoundEvaluator ev(m, root_particles(ExactBelief::initial(m), c), c);
  auto first = ev.evaluate(Topology::fully_open_loop());
  EXPECT_EQ(first.cache_hits, 0u);
  EXPECT_GT(first.cache_misses, 0u);
  auto again = ev.evaluate(Topology::fully_open_loop());
  EXPECT_GT(again.cache_hits, 0u);
  for (int a = 0; a < 3; ++a) {
    EXPECT_EQ(first.bounds[a].lower, again.bounds[a].lower);
    EXPECT_EQ(first.bounds[a].upper, again.bounds[a].upper);
  }
  // after closing the root only the changed subtrees are recomputed, and the
  // result matches an evaluation without any cache
  auto tr = refine_topology(Topology::fully_open_loop(), {HistoryKey{}}, m.num_observations());
  auto refined = ev.evaluate(tr.topology);
  auto fresh = solve_root(m, root_particles(ExactBelief::initial(m), c), tr.topology, c);
  for (int a = 0; a < 3; ++a) {
    EXPECT_EQ(refined.bounds[a].lower, fresh.bounds[a].lower);
    EXPECT_EQ(refined.bounds[a].upper, fresh.bounds[a].upper);
  }
}

TEST(SparsePft, ForcedSingleActionMatchesPlainEstimate) {
  auto m = random_tiny_pomdp(17);
  auto c = cfg(20, 10, m.horizon(), 2);
  auto root = root_particles(ExactBelief::initial(m), c);
  for (int a = 0; a < m.num_actions(); ++a) {
    std::vector<int> forced{a};
    EXPECT_EQ(estimate_forced(m, root, forced, Topology::fully_open_loop(), bound_side::lower, c),
              estimate_lb(m, root, a, Topology::fully_open_loop(), c));
  }
  EXPECT_THROW(estimate_forced(m, root, {}, Topology::fully_open_loop(), bound_side::lower, c), contract_violation);
}

TEST(SparsePft, CandidatesAreShallowSimplifiedNodes) {
  auto m = tiger_pomdp(3);
  auto c = cfg(16, 8, 3);
  auto e = solve_root(m, root_particles(ExactBelief::initial(m), c), Topology::fully_open_loop(), c);
  ASSERT_FALSE(e.candidates.empty());
  for (const auto& cand : e.candidates) EXPECT_LE(cand.depth, 1);
  EXPECT_EQ(e.candidates.front().depth, 0);
}

TEST(SparsePft, BeaconBoundsNarrowToZeroWithRefinement) {
  // reduced beacon grid: refine shallowest-first on the same samples until no
  // simplified node is left. Sampled bounds may cross by sampling noise, so the
  // checks are on the total width.
  auto spec = reduced_beacon_spec();
  auto m = build_beacon_pomdp(spec);
  auto c = cfg(32, 32, 3, 7);
  auto b = ExactBelief::initial(m);
  auto root = root_particles(b, c);
  Topology tau = Topology::fully_open_loop();
  std::vector<double> widths;
  Evaluation e;
  for (int level = 0; level < 4; ++level) {
    e = solve_root(m, root, tau, c);
    double w = 0.0;
    for (const auto& bp : e.bounds) {
      EXPECT_GT(bp.width(), -0.5);
      w += bp.width();
    }
    widths.push_back(w);
    if (e.candidates.empty()) break;
    std::vector<HistoryKey> sel;
    for (const auto& cand : e.candidates)
      if (cand.depth == e.candidates.front().depth) sel.push_back(cand.key);
    tau = refine_topology(tau, sel, m.num_observations()).topology;
  }
  // the open-loop width agrees with the exact one up to sampling noise
  double exact_width = 0.0;
  for (int a = 0; a < m.num_actions(); ++a)
    exact_width += exact_afo_value(m, b, a, Topology::fully_open_loop(), 3) -
                   exact_aol_value(m, b, a, Topology::fully_open_loop(), 3);
  EXPECT_GE(exact_width, 0.0);
  EXPECT_NEAR(widths.front(), exact_width, 1.0);
  ASSERT_TRUE(e.candidates.empty());
  for (const auto& bp : e.bounds) EXPECT_EQ(bp.lower, bp.upper);
  // the exact values lie inside the open-loop interval up to sampling noise
  for (int a = 0; a < m.num_actions(); ++a) {
    double q = exact_q_star(m, b, a, 3);
    EXPECT_LE(estimate_lb(m, root, a, Topology::fully_open_loop(), c), q + 2.0);
    EXPECT_GE(estimate_ub(m, root, a, Topology::fully_open_loop(), c), q - 2.0);
  }
}

TEST(SparsePft, PlanningWithSampledBoundsPicksListenOnTiger) {
  auto m = tiger_pomdp(2, 0.95);
  auto c = cfg(64, 64, 2, 3);
  SparseBoundEvaluator ev(m, root_particles(ExactBelief::initial(m), c), c);
  auto r = plan_with_guarantees(ev, Topology::fully_open_loop());
  EXPECT_TRUE(r.guaranteed);
  EXPECT_EQ(r.action, 0);
}

TEST(SparsePft, DeterministicModelMatchesOracleExactly) {
  // deterministic transitions and observations from a known state: every
  // sample is the same, so there is no sampling error at all
  DiscretePomdp m(3, 2, 2, 3);
  for (int s = 0; s < 3; ++s)
    for (int a = 0; a < 2; ++a) {
      m.set_transition(s, a, (s + a + 1) % 3, 1.0);
      m.set_reward(s, a, 0.5 * s - 0.25 * a);
    }
  m.set_observation(0, 0, 1.0);
  m.set_observation(1, 1, 1.0);
  m.set_observation(2, 0, 1.0);
  m.set_initial_belief({0.0, 1.0, 0.0});
  m.finalize();
  auto b = ExactBelief::initial(m);
  for (std::uint64_t seed : {1, 2, 3}) {
    auto c = cfg(5, 3, 3, seed);
    auto root = root_particles(b, c);
    auto mixed = random_mixed_topology(m, 3, seed);
    for (const auto& tau : {Topology::fully_open_loop(), mixed, Topology::fully_closed_loop()})
      for (int a = 0; a < 2; ++a) {
        EXPECT_DOUBLE_EQ(estimate_lb(m, root, a, tau, c), exact_aol_value(m, b, a, tau, 3));
        EXPECT_DOUBLE_EQ(estimate_ub(m, root, a, tau, c), exact_afo_value(m, b, a, tau, 3));
      }
  }
}
