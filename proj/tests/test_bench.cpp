#include <gtest/gtest.h>

#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "aol/bench/config.hpp"
#include "aol/bench/experiment.hpp"
#include "aol/bench/oracle_suite.hpp"
#include "aol/bench/plot_data.hpp"

using namespace aol;
using namespace aol::bench;
namespace fs = std::filesystem;

namespace {

ExperimentConfig parse(const std::string& text) {
  std::istringstream is(text);
  return make_config(ConfigDocument::parse(is));
}

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("aol_bench_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

const char* kSmall = R"(
seeds = "3,4"

[experiment]
name = "small"

[environment]
kind = "reduced_beacon"

[solver]
kind = "sparse_pft"
horizon = 2
N = 6
NO = 6

[episodes]
steps = 3
)";

}  // namespace

TEST(Config, SeedListsAcceptRangesAndSingles) {
  EXPECT_EQ(parse_seed_list("0..3,10"), (std::vector<std::uint64_t>{0, 1, 2, 3, 10}));
  EXPECT_EQ(parse_seed_list("7"), (std::vector<std::uint64_t>{7}));
  EXPECT_THROW(parse_seed_list("5..2"), parse_error);
  EXPECT_THROW(parse_seed_list("x"), parse_error);
}

TEST(Config, CellsRoundTrip) {
  auto cells = parse_cells("1:2;3:4");
  ASSERT_EQ(cells.size(), 2u);
  EXPECT_EQ(cells[1].x, 3);
  EXPECT_EQ(cells[1].y, 4);
  EXPECT_EQ(format_cells(cells), "1:2;3:4");
  EXPECT_THROW(parse_cells("1-2"), parse_error);
}

TEST(Config, ReadsDottedKeysAndSections) {
  auto c = parse(R"(
seeds = "1..4"
environment.kind = "tunnel"
environment.length = 9
[solver]
kind = "exact"
horizon = 2
[skip]
enabled = true
k = 2
m = 3
)");
  EXPECT_EQ(c.seeds.size(), 4u);
  EXPECT_EQ(c.env_kind, environment_kind::tunnel);
  EXPECT_EQ(c.solver.kind, solver_kind::exact);
  EXPECT_EQ(c.solver.horizon, 2);
  EXPECT_TRUE(c.skip.enabled);
  EXPECT_EQ(c.skip.k, 2);
  EXPECT_EQ(c.skip.m, 3);
}

TEST(Config, RejectsUnknownKeysBadValuesAndEmptySeeds) {
  EXPECT_THROW(parse("solver.particles = 3\n"), parse_error);
  EXPECT_THROW(parse("solver.kind = \"mcts\"\n"), parse_error);
  EXPECT_THROW(parse("solver.N = \"many\"\n"), parse_error);
  EXPECT_THROW(parse("episodes.steps = 0\n"), contract_violation);
  EXPECT_THROW(parse("experiment.compare = \"skip\"\n"), contract_violation);
  EXPECT_THROW(parse("solver.N = 0\n"), contract_violation);
  ExperimentConfig c;
  c.seeds.clear();
  EXPECT_THROW(c.validate(), contract_violation);
}

TEST(Summary, StdIsUndefinedForOneSeed) {
  auto s = describe({2.5});
  EXPECT_EQ(s.mean, 2.5);
  EXPECT_FALSE(s.std_defined);
  EXPECT_EQ(to_json(s)["std"], "undefined");
  auto t = describe({1.0, 3.0});
  EXPECT_TRUE(t.std_defined);
  EXPECT_DOUBLE_EQ(t.std, std::sqrt(2.0));
  EXPECT_DOUBLE_EQ(pooled_std(t, t), std::sqrt(2.0));
  EXPECT_TRUE(std::isnan(pooled_std(s, t)));
}

TEST(Experiment, OneSeedOneStepBaselineOnly) {
  auto c = parse(kSmall);
  c.seeds = {0};
  c.steps = 1;
  c.compare = comparison::none;
  auto r = run_experiment(c, false);
  EXPECT_FALSE(r.baseline.has_value());
  EXPECT_EQ(r.treatment.steps, 1);
  EXPECT_FALSE(r.treatment.return_stats.std_defined);
  EXPECT_TRUE(std::isnan(r.speedup));
}

TEST(Experiment, TracesAreByteIdenticalAcrossRuns) {
  auto dir = scratch("determinism");
  auto c = parse(kSmall);
  c.out_dir = (dir / "a").string();
  auto first = run_experiment(c);
  c.out_dir = (dir / "b").string();
  auto second = run_experiment(c);
  ASSERT_EQ(first.trace_files.size(), 4u);
  ASSERT_EQ(second.trace_files.size(), 4u);
  for (std::size_t i = 0; i < first.trace_files.size(); ++i) {
    EXPECT_EQ(fs::path(first.trace_files[i]).filename(), fs::path(second.trace_files[i]).filename());
    EXPECT_EQ(slurp(first.trace_files[i]), slurp(second.trace_files[i]));
  }
  auto j = nlohmann::json::parse(slurp(dir / "a" / "small" / "summary.json"));
  EXPECT_EQ(j["treatment"]["seeds"].size(), 2u);
  EXPECT_TRUE(j.contains("speedup"));
  EXPECT_TRUE(j.contains("pooled_std"));
  EXPECT_EQ(j["config"]["observation_error_model"], "clamped");
}

TEST(Experiment, WorkerCountDoesNotChangeResults) {
  auto c = parse(kSmall);
  auto one = run_experiment(c, false);
  c.workers = 3;
  auto three = run_experiment(c, false);
  EXPECT_EQ(one.treatment.returns, three.treatment.returns);
  EXPECT_EQ(one.baseline->returns, three.baseline->returns);
}

TEST(Experiment, BaselineAndTreatmentSeeTheSameEnvironmentNoise) {
  // with skipping compared, both variants use the same planner; without any
  // certified skip their traces coincide
  auto c = parse(R"(
seeds = "0..2"
[experiment]
compare = "skip"
[environment]
kind = "tunnel"
length = 12
[solver]
kind = "exact"
horizon = 3
[skip]
enabled = true
k = 1
[episodes]
steps = 5
)");
  auto r = run_experiment(c, false);
  ASSERT_TRUE(r.baseline);
  EXPECT_GT(r.treatment.skipped, 0);
  EXPECT_EQ(r.baseline->skipped, 0);
  EXPECT_EQ(r.treatment.returns, r.baseline->returns);
  EXPECT_EQ(r.mean_return_difference, 0.0);
}

TEST(Experiment, SeedErrorsAreRecordedAndTheRunContinues) {
  // the closed-loop exact baseline on the beacon grid exceeds the oracle's
  // node budget at horizon 5
  auto c = parse(kSmall);
  c.solver.kind = solver_kind::exact;
  c.solver.horizon = 5;
  c.seeds = {1};
  auto model = build_model(c);
  auto bad = run_episode(model, c, variant::baseline, 1);
  EXPECT_FALSE(bad.ok);
  EXPECT_NE(bad.error.find("budget"), std::string::npos) << bad.error;
  auto s = summarize("baseline", {bad, run_episode(model, parse(kSmall), variant::baseline, 2)});
  EXPECT_EQ(s.failures(), 1);
  EXPECT_EQ(s.returns.size(), 1u);
  EXPECT_FALSE(s.return_stats.std_defined);
  EXPECT_EQ(to_json(s)["seeds"][0]["error"].get<std::string>(), bad.error);
}

TEST(Experiment, BoundDistributionHasOneRowPerSeedAndAction) {
  auto c = parse(kSmall);
  c.kind = experiment_kind::bounds;
  auto rows = bound_distribution(c);
  EXPECT_EQ(rows.size(), 2u * 4u);
  std::ostringstream os;
  write_bound_distribution(os, rows);
  EXPECT_EQ(os.str().substr(0, os.str().find('\n')), "action,lb,ub,baseline_q");
}

TEST(OracleSuite, PassesOnDefaultsAndChecksEveryProperty) {
  SuiteOptions o;
  o.instances = 12;
  auto rep = run_oracle_suite(o);
  EXPECT_TRUE(rep.passed());
  ASSERT_EQ(rep.properties.size(), 5u);
  for (const auto& p : rep.properties) EXPECT_GT(p.checks, 0) << p.name;
}

TEST(OracleSuite, InjectedBugIsCaught) {
  SuiteOptions o;
  o.instances = 12;
  o.inject_bug = true;
  auto rep = run_oracle_suite(o);
  EXPECT_FALSE(rep.passed());
  for (const auto& p : rep.properties) {
    EXPECT_GT(p.violations, 0) << p.name;
    EXPECT_FALSE(p.counterexamples.empty()) << p.name;
  }
  std::ostringstream os;
  write_report(os, rep);
  EXPECT_NE(os.str().find("FAILED"), std::string::npos);
}

TEST(OracleSuite, ZeroInstancesPassVacuouslyWithAWarning) {
  SuiteOptions o;
  o.instances = 0;
  auto rep = run_oracle_suite(o);
  EXPECT_TRUE(rep.passed());
  ASSERT_EQ(rep.warnings.size(), 1u);
  EXPECT_NE(rep.warnings[0].find("vacuous"), std::string::npos);
}

TEST(PlotData, EmptyTraceGivesHeaderOnly) {
  auto dir = scratch("plot_empty");
  fs::create_directories(dir / "in" / "traces");
  std::ofstream(dir / "in" / "traces" / "treatment_seed0.csv").close();
  auto out = emit_plot_data(dir / "in", dir / "out");
  EXPECT_EQ(slurp(out.cumulative), "trace,step,cumulative\n");
  EXPECT_EQ(slurp(out.bounds), "action,lb,ub,baseline_q\n");
}

TEST(PlotData, SingleEpisodeGivesOneCurveWithStepRows) {
  auto dir = scratch("plot_single");
  auto c = parse(kSmall);
  c.seeds = {5};
  c.compare = comparison::none;
  c.out_dir = (dir / "runs").string();
  run_experiment(c);
  auto out = emit_plot_data(dir / "runs", dir / "plots");
  std::istringstream is(slurp(out.cumulative));
  std::string line;
  int rows = 0;
  std::getline(is, line);
  while (std::getline(is, line)) {
    EXPECT_EQ(line.rfind("small/treatment_seed5,", 0), 0u) << line;
    ++rows;
  }
  EXPECT_EQ(rows, 3);
  EXPECT_EQ(out.summaries, 1);
  EXPECT_NE(slurp(out.budget).find("small,treatment,"), std::string::npos);
}

TEST(PlotData, MalformedRowNamesTheRow) {
  auto dir = scratch("plot_bad");
  fs::create_directories(dir / "traces");
  std::ofstream(dir / "traces" / "x.csv") << "step,action,observation,in_zbar,skipped,reward,cumulative\n"
                                          << "0,1,2,0,0,1,1\n"
                                          << "1,1,2,0,0,one,2\n";
  try {
    emit_plot_data(dir, dir / "out");
    FAIL() << "expected parse_error";
  } catch (const parse_error& e) {
    EXPECT_NE(std::string(e.what()).find("row 3"), std::string::npos) << e.what();
  }
  EXPECT_THROW(emit_plot_data(dir / "missing", dir / "out"), parse_error);
}

TEST(Cli, ExitCodes) {
  const std::string exe = AOL_BENCH_EXE;
  auto dir = scratch("cli");
  std::ofstream(dir / "small.toml") << kSmall;
  auto sh = [](const std::string& cmd) { return std::system((cmd + " > /dev/null 2>&1").c_str()); };
  EXPECT_EQ(sh(exe + " oracle-check --instances 4"), 0);
  EXPECT_NE(sh(exe + " oracle-check --instances 4 --inject-bug"), 0);
  EXPECT_EQ(sh(exe + " oracle-check --instances 0"), 0);
  EXPECT_EQ(sh(exe + " run --config " + (dir / "small.toml").string() + " --out-dir " + (dir / "o").string() +
               " --seed-override 9 --compat-paper-obsmodel"),
            0);
  auto j = nlohmann::json::parse(slurp(dir / "o" / "small" / "summary.json"));
  EXPECT_EQ(j["config"]["observation_error_model"], "paper");
  EXPECT_EQ(j["treatment"]["seeds"][0]["seed"], 9);
  EXPECT_NE(sh(exe + " run --config " + (dir / "missing.toml").string()), 0);
  std::ofstream(dir / "bad.toml") << "solver.bogus = 1\n";
  EXPECT_NE(sh(exe + " run --config " + (dir / "bad.toml").string()), 0);
  EXPECT_EQ(sh(exe + " plot-data --input " + (dir / "o").string() + " --out-dir " + (dir / "p").string()), 0);
  EXPECT_TRUE(fs::exists(dir / "p" / "cumulative_reward.csv"));
  EXPECT_NE(sh(exe), 0);
}
