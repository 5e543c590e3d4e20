#include "confident/run.hpp"
#include "confident/verify.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace confident;

namespace {

std::string error_of(const std::string& text) {
  try {
    parse_run_config(text, "cfg");
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(RunConfig, ParsesKeysAndComments) {
  const auto c = parse_run_config(
      "# comment\nfamily = tabular_onehot\nstates=7\n actions = 3 # trailing\n"
      "algo = politex\ngamma = 0.8\nlambda = 1e-2\nm = 4\nn = 9\nK = 5\nseed = 12\nrandom_initial = uniform\n",
      "cfg");
  EXPECT_EQ(c.env.family, EnvFamily::kTabularOneHot);
  EXPECT_EQ(c.env.states, 7u);
  EXPECT_EQ(c.env.actions, 3u);
  EXPECT_EQ(c.planner.algo, Algorithm::kPolitex);
  EXPECT_DOUBLE_EQ(c.planner.gamma, 0.8);
  EXPECT_DOUBLE_EQ(c.planner.lambda, 0.01);
  EXPECT_EQ(c.planner.m, 4u);
  EXPECT_EQ(c.planner.n, 9u);
  EXPECT_EQ(c.planner.K, 5u);
  EXPECT_EQ(c.planner.master_seed, 12u);
  EXPECT_TRUE(c.random_initial);
  EXPECT_FALSE(c.alpha_given);
}

TEST(RunConfig, ErrorsNameTheLine) {
  EXPECT_NE(error_of("states = 3\nbogus = 1\n").find("cfg:2"), std::string::npos);
  EXPECT_NE(error_of("m = x\n").find("cfg:1"), std::string::npos);
  EXPECT_NE(error_of("m = 1\nm = 2\n").find("duplicate"), std::string::npos);
  EXPECT_NE(error_of("\n\nno equals sign\n").find("cfg:3"), std::string::npos);
  EXPECT_NE(error_of("family = grid\n").find("grid"), std::string::npos);
  EXPECT_NE(error_of("algo = dqn\n").find("cfg:1"), std::string::npos);
  EXPECT_NE(error_of("family = file\n").find("path"), std::string::npos);
  EXPECT_THROW(load_run_config("/no/such/file.conf"), ConfigError);
}

TEST(RunConfig, DefaultAlphaFollowsFormula) {
  RunConfig c = parse_run_config("family = chain\nalgo = politex\nK = 50\n", "cfg");
  prepare_env(c);
  EXPECT_NEAR(c.planner.alpha, 0.1 * std::sqrt(2 * std::log(2.0) / 50), 1e-15);
}

TEST(RunReport, JsonRoundTripsAndCsvHeader) {
  RunConfig c = parse_run_config(
      "family = tabular_onehot\nstates = 4\nactions = 2\nlambda = 1e-2\nm = 3\nn = 8\nK = 3\nseed = 5\n"
      "eval_rollouts = 50\n",
      "cfg");
  const RunOutcome run = execute_run(c);
  const nlohmann::json j(run.report);
  const RunReport back = nlohmann::json::parse(j.dump()).get<RunReport>();
  EXPECT_EQ(back, run.report);
  for (const char* key : {"gap", "loops", "coreset_size", "queries"}) EXPECT_TRUE(j.contains(key));
  ASSERT_TRUE(run.report.gap.has_value());
  EXPECT_GE(*run.report.gap, -1e-9);
  EXPECT_TRUE(run.report.violations.empty());
  EXPECT_TRUE(run.report.rollout_value.has_value());
  const std::string csv = records_to_csv(run.report.records);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "loop,iteration,coreset_size,restart,queries,weight_norm");
  EXPECT_EQ(static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')), run.report.records.size() + 1);
}

TEST(RunReport, ParallelismDoesNotChangeReport) {
  RunConfig c = parse_run_config("family = tabular_onehot\nstates = 5\nlambda = 1e-2\nm = 4\nn = 10\nK = 3\n", "cfg");
  RunConfig d = c;
  d.planner.parallelism = 8;
  EXPECT_TRUE(same_result(execute_run(c).report, execute_run(d).report));
}

TEST(Evaluate, PolitexMixtureAveragesIterates) {
  RunConfig c = parse_run_config("family = chain\nalgo = politex\nalpha = 0.5\nm = 5\nn = 30\nK = 4\n", "cfg");
  PreparedEnv p = prepare_env(c);
  const auto out = plan(c.planner, p.env, p.env.feature_map(), p.start);
  const auto ev = evaluate_exact(out, p.env, p.start);
  double mean = 0.0;
  for (const auto& pol : out.policies) mean += policy_values(p.env.mdp(), policy_table(pol, p.env))[0];
  mean /= 4.0;
  EXPECT_NEAR(ev.output, mean, 1e-12);
  EXPECT_NEAR(ev.optimal, std::pow(0.9, 4) / 0.1, 1e-10);
  EXPECT_NEAR(ev.gap, ev.optimal - ev.output, 0.0);
}

TEST(Evaluate, RandomInitialGapIsInBaseUnits) {
  RunConfig c = parse_run_config("family = chain\nrandom_initial = uniform\nm = 5\nn = 40\nK = 6\n", "cfg");
  PreparedEnv p = prepare_env(c);
  EXPECT_EQ(p.start, StateId{5});
  EXPECT_NEAR(p.value_scale, 1 / 0.9, 1e-15);
  const auto out = plan(c.planner, p.env, p.env.feature_map(), p.start);
  const auto ev = evaluate_exact(out, p.env, p.start, p.value_scale);
  // Mean of V* over the 5 chain states.
  double vstar = 0.0;
  for (int s = 0; s < 5; ++s) vstar += std::pow(0.9, 4 - s) / 0.1 / 5;
  EXPECT_NEAR(ev.optimal, vstar, 1e-9);
}

TEST(Verify, SuitesPassWithSmallBudgets) {
  for (const auto& [suite, trials] : std::vector<std::pair<std::string, std::size_t>>{
           {"coreset", 10}, {"determinant", 10}, {"coupling", 3}, {"hoeffding", 500}, {"random-initial", 5}}) {
    const SuiteResult r = run_verify_suite(suite, trials, 1);
    EXPECT_TRUE(r.passed()) << suite << ": " << (r.first_failure() ? r.first_failure()->detail : "");
  }
  EXPECT_THROW(run_verify_suite("nope", 1, 0), ConfigError);
}
