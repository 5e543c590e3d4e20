#include "confident/envs.hpp"
#include "confident/rollout.hpp"
#include "test_helpers.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace confident;
using testing_helpers::self_loop;

namespace {

CoreSet full_core_set(const TabularEnvironment& env, double lambda) {
  const auto f = env.feature_map();
  CoreSet c(f.dim(), lambda, 1.0);
  for (std::size_t s = 0; s < env.state_count(); ++s) {
    for (std::size_t a = 0; a < env.action_count(); ++a) {
      c.add(CoreSetEntry{StateId{s}, ActionId{a}, f(StateId{s}, ActionId{a}), std::nullopt});
    }
  }
  return c;
}

TabularEnvironment two_state_line() {
  TabularMdp mdp(2, 2, 0.9);
  for (std::size_t a = 0; a < 2; ++a) {
    mdp.prob(0, a, 1) = 1.0;
    mdp.prob(1, a, 1) = 1.0;
  }
  return TabularEnvironment(std::move(mdp), Eigen::MatrixXd::Identity(4, 4));
}

}  // namespace

TEST(ConfidentRollout, SelfLoopGeometricSum) {
  const auto env = self_loop(1.0, 0.5);
  SimulatorHandle<TabularEnvironment> sim(env);
  const CoreSet core = full_core_set(env, 1e-3);
  const RolloutSpec spec{3, 2, 0.5, StateId{0}, ActionId{0}};
  const auto r = confident_rollout(spec, UniformPolicy{}, core, sim, env.feature_map(), RolloutKey{});
  ASSERT_TRUE(std::holds_alternative<RolloutDone>(r));
  EXPECT_DOUBLE_EQ(std::get<RolloutDone>(r).estimate, 1.75);
  EXPECT_EQ(sim.query_count(), 9u);
}

TEST(ConfidentRollout, ZeroLengthIsOneQuery) {
  const auto env = self_loop(0.7, 0.9);
  SimulatorHandle<TabularEnvironment> sim(env);
  // Empty-ish core set: the start pair is never screened.
  CoreSet core(1, 1e-6, 1.0);
  core.add(CoreSetEntry{StateId{0}, ActionId{0}, FeatureVector::Zero(1), std::nullopt});
  const RolloutSpec spec{1, 0, 0.9, StateId{0}, ActionId{0}};
  const auto r = confident_rollout(spec, UniformPolicy{}, core, sim, env.feature_map(), RolloutKey{});
  ASSERT_TRUE(std::holds_alternative<RolloutDone>(r));
  EXPECT_DOUBLE_EQ(std::get<RolloutDone>(r).estimate, 0.7);
  EXPECT_EQ(sim.query_count(), 1u);
}

TEST(ConfidentRollout, ReportsFirstUncertainAction) {
  const auto env = two_state_line();
  const auto f = env.feature_map();
  SimulatorHandle<TabularEnvironment> sim(env);
  CoreSet core(4, 0.01, 1.0);
  for (std::size_t a = 0; a < 2; ++a) {
    core.add(CoreSetEntry{StateId{0}, ActionId{a}, f(StateId{0}, ActionId{a}), std::nullopt});
  }
  const RolloutSpec spec{5, 4, 0.9, StateId{0}, ActionId{0}};
  const auto r = confident_rollout(spec, UniformPolicy{}, core, sim, f, RolloutKey{});
  ASSERT_TRUE(std::holds_alternative<RolloutUncertain>(r));
  const auto& e = std::get<RolloutUncertain>(r).entry;
  EXPECT_EQ(e.state, StateId{1});
  EXPECT_EQ(e.action.index, 0u);
  EXPECT_EQ(e.feature, f(StateId{1}, ActionId{0}));
  EXPECT_FALSE(e.q_estimate.has_value());
  EXPECT_NEAR(core.uncertainty(e.feature), 100.0, 1e-9);
  EXPECT_EQ(sim.query_count(), 1u);
}

TEST(ConfidentRollout, EstimatesStayInTruncatedRange) {
  EnvSpec spec;
  spec.family = EnvFamily::kTabularOneHot;
  spec.states = 5;
  spec.actions = 2;
  spec.seed = 8;
  const auto env = make_env(spec);
  const CoreSet core = full_core_set(env, 1e-2);
  SimulatorHandle<TabularEnvironment> sim(env, StateId{0});
  for (std::uint64_t k = 0; k < 50; ++k) {
    const RolloutSpec rs{4, 7, 0.9, StateId{0}, ActionId{k % 2}};
    std::vector<StateId> screened;
    const auto r = confident_rollout(rs, UniformPolicy{}, core, sim, env.feature_map(),
                                     RolloutKey{k, 0, 0, 0}, &screened);
    ASSERT_TRUE(std::holds_alternative<RolloutDone>(r));
    const double q = std::get<RolloutDone>(r).estimate;
    EXPECT_GE(q, 0.0);
    EXPECT_LE(q, (1 - std::pow(0.9, 8)) / 0.1 + 1e-12);
    EXPECT_EQ(screened.size(), 4u * 7u);
    for (StateId s : screened) {
      for (std::size_t a = 0; a < 2; ++a) EXPECT_TRUE(core.is_confident(env.feature(s, ActionId{a})));
    }
  }
}

TEST(CoresetPass, StopsAtFirstUncertainEntry) {
  EnvSpec spec;
  spec.family = EnvFamily::kChain;
  spec.states = 5;
  const auto env = make_env(spec);
  const auto f = env.feature_map();
  SimulatorHandle<TabularEnvironment> sim(env);
  sim.query_with_draw(StateId{0}, ActionId{1}, 0.0);
  sim.query_with_draw(StateId{1}, ActionId{1}, 0.0);
  const std::uint64_t before = sim.query_count();
  CoreSet core(f.dim(), 0.01, 1.0);
  const std::pair<std::uint64_t, std::size_t> pairs[] = {{0, 0}, {0, 1}, {1, 0}, {1, 1}, {2, 1}};
  for (auto [s, a] : pairs) core.add(CoreSetEntry{StateId{s}, ActionId{a}, f(StateId{s}, ActionId{a}), std::nullopt});
  // Always-left greedy policy: only entry 3 reaches state 2, whose left action is uncovered.
  const PolicySnapshot left = GreedyPolicy{[&] {
    WeightVector w = WeightVector::Zero(10);
    for (int s = 0; s < 5; ++s) w[2 * s] = 1.0;
    return w;
  }()};
  for (std::size_t workers : {1u, 8u}) {
    SimulatorHandle<TabularEnvironment> view = sim.fork();
    const auto pass = run_coreset_pass(core, left, 2, 3, 0.9, view, f, RolloutKey{1, 0, 1, 0},
                                       PassOptions{workers, false});
    ASSERT_FALSE(pass.done());
    EXPECT_EQ(pass.uncertain_coreset_index, 3u);
    EXPECT_EQ(pass.uncertain_rollout_index, 0u);
    EXPECT_EQ(pass.uncertain_step, 1u);
    EXPECT_EQ(pass.uncertain->state, StateId{2});
    EXPECT_EQ(pass.uncertain->action.index, 0u);
    EXPECT_EQ(view.query_count(), 3u * 2u * 4u + 1u);
    EXPECT_TRUE(pass.q.empty());
  }
  EXPECT_EQ(sim.query_count(), before);
}

TEST(CoresetPass, ParallelMatchesSequentialBitForBit) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    EnvSpec spec;
    spec.family = EnvFamily::kTabularOneHot;
    spec.states = 6;
    spec.actions = 2;
    spec.seed = seed;
    const auto env = make_env(spec);
    const auto f = env.feature_map();
    // Cover only some pairs so that some seeds hit uncertain states.
    CoreSet core(f.dim(), 0.05, 1.0);
    SimulatorHandle<TabularEnvironment> probe(env);
    core.add(CoreSetEntry{StateId{0}, ActionId{0}, f(StateId{0}, ActionId{0}), std::nullopt});
    core.add(CoreSetEntry{StateId{0}, ActionId{1}, f(StateId{0}, ActionId{1}), std::nullopt});
    if (seed % 2 == 0) {
      for (std::size_t s = 1; s < 6; ++s) {
        for (std::size_t a = 0; a < 2; ++a) {
          core.add(CoreSetEntry{StateId{s}, ActionId{a}, f(StateId{s}, ActionId{a}), std::nullopt});
        }
      }
    }
    // Visit everything reachable so every entry is a legal start.
    for (int i = 0; i < 200; ++i) {
      RngStream rng(StreamKey{seed, 9, 9, 9, static_cast<std::uint64_t>(i), 0});
      StateId s{0};
      for (int t = 0; t < 10; ++t) s = probe.query(s, ActionId{static_cast<std::size_t>(t % 2)}, rng).next_state;
    }
    CoreSet usable(f.dim(), 0.05, 1.0);
    for (const auto& e : core.entries()) {
      if (probe.has_visited(e.state)) usable.add(e);
    }
    const PolicySnapshot pol = UniformPolicy{};
    SimulatorHandle<TabularEnvironment> a = probe.fork(), b = probe.fork();
    const auto seq = run_coreset_pass(usable, pol, 5, 12, 0.9, a, f, RolloutKey{seed, 2, 3, 0},
                                      PassOptions{1, true});
    const auto par = run_coreset_pass(usable, pol, 5, 12, 0.9, b, f, RolloutKey{seed, 2, 3, 0},
                                      PassOptions{8, true});
    EXPECT_EQ(seq.done(), par.done());
    EXPECT_EQ(seq.q, par.q);
    EXPECT_EQ(seq.uncertain, par.uncertain);
    EXPECT_EQ(seq.uncertain_coreset_index, par.uncertain_coreset_index);
    EXPECT_EQ(seq.uncertain_rollout_index, par.uncertain_rollout_index);
    EXPECT_EQ(seq.screened, par.screened);
    EXPECT_EQ(a.query_count(), b.query_count());
    EXPECT_EQ(a.visited_count(), b.visited_count());
  }
}
