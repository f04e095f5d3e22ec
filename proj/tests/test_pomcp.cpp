#include <gtest/gtest.h>

#include <sstream>

#include "aol/envs.hpp"
#include "aol/pomcp.hpp"
#include "aol/random_models.hpp"

using namespace aol;

namespace {

PomcpConfig base(int horizon, long sims, std::uint64_t seed = 1) {
  PomcpConfig c;
  c.horizon = horizon;
  c.max_simulations = sims;
  c.seed = seed;
  return c;
}

}  // namespace

TEST(PomcpConfig, Validation) {
  auto c = base(3, 10);
  c.pw_alpha = 1.5;
  EXPECT_THROW(c.validate(), contract_violation);
  c = base(3, 10);
  c.nodes_per_transition = 0;
  EXPECT_THROW(c.validate(), contract_violation);
  c = base(3, 0);
  EXPECT_THROW(c.validate(), contract_violation);
}

TEST(Pomcp, ClosedLoopSearchFindsListenOnTiger) {
  auto m = tiger_pomdp(2, 0.95);
  auto c = base(2, 20000);
  c.adaptive = false;
  c.initial_topology = Topology::fully_closed_loop();
  c.ucb_c = 100.0;
  auto r = pomcp_search(m, ExactBelief::initial(m), c);
  EXPECT_EQ(r.action, 0);
  EXPECT_NEAR(r.value, 3.5, 1.5);  // exact Q* of listening
  EXPECT_EQ(r.transitions, 0);
  EXPECT_EQ(r.simulations, 20000);
}

TEST(Pomcp, OpenLoopValuesApproachTheOpenLoopBound) {
  auto m = tiger_pomdp(2, 0.95);
  auto c = base(2, 20000);
  c.adaptive = false;
  c.ucb_c = 100.0;
  auto r = pomcp_search(m, ExactBelief::initial(m), c);
  EXPECT_NEAR(r.root_values[0], -2.0, 1.5);  // AOL(listen)
}

TEST(Pomcp, ProgressiveScheduleFiresAtKTimesJ) {
  auto m = random_tiny_pomdp(3);
  auto c = base(m.horizon(), 1000);
  c.pw_k = 100;
  c.pw_alpha = 1.0;
  auto r = pomcp_search(m, ExactBelief::initial(m), c);
  // i > 100 j with j = 1, 2, ...: simulations 101, 201, ..., 901
  ASSERT_EQ(r.transitions, 9);
  for (int t = 0; t < 9; ++t) {
    EXPECT_EQ(r.diagnostics[t].sim_index, 101 + 100 * t);
    EXPECT_EQ(r.diagnostics[t].j, t + 2);
    EXPECT_LE(r.diagnostics[t].nodes_flipped, 1);
  }
}

TEST(Pomcp, TransitionsEventuallyBecomeIdentities) {
  // once every reachable simplified node is closed there is nothing to flip
  auto m = tiger_pomdp(2, 0.85);
  auto c = base(2, 3000);
  c.pw_k = 5;
  c.pw_alpha = 0.5;
  auto r = pomcp_search(m, ExactBelief::initial(m), c);
  EXPECT_GT(r.transitions, 10);
  EXPECT_GT(r.identity_transitions, 0);
  EXPECT_EQ(r.topology.lower({}), closed);
  EXPECT_EQ(r.action, 0);
}

TEST(Pomcp, TreeRespectsHorizonAndModeKeys) {
  auto m = random_tiny_pomdp(9);
  for (auto mode : {bound_side::lower, bound_side::upper}) {
    auto c = base(m.horizon(), 2000);
    c.adaptive = false;
    c.mode = mode;
    AtPomcp p(m, c);
    p.search(ExactBelief::initial(m));
    for (const auto& [k, n] : p.tree()) {
      EXPECT_LE(n.depth, m.horizon());
      EXPECT_EQ(n.depth, key_depth(k) + 1);
      for (const auto& e : k) {
        if (mode == bound_side::lower) EXPECT_EQ(e.kind, entry_kind::action);
        else EXPECT_NE(e.kind, entry_kind::observation);
      }
    }
  }
}

TEST(Pomcp, ReturnsStayWithinRewardRange) {
  auto m = random_tiny_pomdp(12);
  auto c = base(m.horizon(), 500);
  AtPomcp p(m, c);
  auto r = p.search(ExactBelief::initial(m));
  const double bound = m.horizon() * m.max_abs_reward() + 1e-12;
  for (double v : r.root_values) EXPECT_LE(std::abs(v), bound);
  std::uint64_t visits = 0;
  for (auto n : r.root_visits) visits += n;
  EXPECT_EQ(visits + 1, p.node({})->visits);
}

TEST(Pomcp, SameSeedSameSearch) {
  auto m = random_tiny_pomdp(21);
  auto c = base(m.horizon(), 1500, 77);
  c.pw_k = 20;
  auto a = pomcp_search(m, ExactBelief::initial(m), c);
  auto b = pomcp_search(m, ExactBelief::initial(m), c);
  EXPECT_EQ(a.action, b.action);
  EXPECT_EQ(a.root_values, b.root_values);
  EXPECT_EQ(a.tree_size, b.tree_size);
  EXPECT_EQ(a.topology, b.topology);
}

TEST(Pomcp, TimeBudgetStopsTheSearch) {
  auto m = build_beacon_pomdp(reduced_beacon_spec());
  auto c = base(3, 0);
  c.time_budget_ms = 20;
  auto r = pomcp_search(m, ExactBelief::initial(m), c);
  EXPECT_GT(r.simulations, 0);
}

TEST(Pomcp, TransitionDiagnosticsCsv) {
  auto m = tiger_pomdp(3);
  auto c = base(3, 400);
  c.pw_k = 50;
  auto r = pomcp_search(m, ExactBelief::initial(m), c);
  std::ostringstream os;
  write_transition_diagnostics(os, r.diagnostics);
  EXPECT_EQ(os.str().substr(0, os.str().find('\n')), "sim_index,j,nodes_flipped,open_loop_fraction");
}

TEST(Pomcp, NodesPerDepthCountsReachableNodes) {
  auto m = tiger_pomdp(3);
  auto c = base(3, 2000);
  c.adaptive = false;
  AtPomcp p(m, c);
  p.search(ExactBelief::initial(m));
  auto counts = p.nodes_per_depth();
  EXPECT_EQ(counts[1], 1u);
  EXPECT_LE(counts[2], 3u);   // open loop: one node per action
  EXPECT_LE(counts[3], 9u);
}
