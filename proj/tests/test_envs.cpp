#include "confident/envs.hpp"
#include "confident/oracle.hpp"
#include "test_helpers.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace confident;
using testing_helpers::self_loop;

TEST(MakeEnv, OneHotTabularBasis) {
  EnvSpec spec;
  spec.family = EnvFamily::kTabularOneHot;
  spec.states = 5;
  spec.actions = 2;
  const auto env = make_env(spec);
  EXPECT_EQ(env.feature_dim(), 10u);
  for (std::size_t s = 0; s < 5; ++s) {
    for (std::size_t a = 0; a < 2; ++a) {
      FeatureVector e = FeatureVector::Zero(10);
      e[static_cast<Eigen::Index>(2 * s + a)] = 1.0;
      EXPECT_EQ(env.feature(StateId{s}, ActionId{a}), e);
    }
  }
}

TEST(MakeEnv, ChainOptimalValue) {
  for (std::size_t S : {2u, 5u, 8u}) {
    EnvSpec spec;
    spec.family = EnvFamily::kChain;
    spec.states = S;
    spec.gamma = 0.9;
    const auto sol = optimal_values(make_env(spec).mdp());
    EXPECT_NEAR(sol.values[0], std::pow(0.9, static_cast<double>(S - 1)) / 0.1, 1e-10);
    for (std::size_t s = 0; s < S; ++s) EXPECT_EQ(sol.actions[s], 1u);
  }
}

TEST(MakeEnv, LowRankIsRealizable) {
  EnvSpec spec;
  spec.family = EnvFamily::kLowRankLinear;
  spec.states = 10;
  spec.actions = 3;
  spec.dim = 5;
  spec.seed = 3;
  const auto env = make_env(spec);
  std::mt19937_64 gen(2);
  for (int k = 0; k < 20; ++k) {
    const auto pi = random_policy_table(env.mdp(), gen, k % 2 == 0);
    EXPECT_LE(fit_q(env, exact_policy_q(env.mdp(), pi)).sup_residual, 1e-9);
  }
  for (Eigen::Index r = 0; r < env.feature_table().rows(); ++r) {
    EXPECT_LE(env.feature_table().row(r).norm(), 1.0 + kFeatureNormSlack);
  }
}

TEST(MakeEnv, MisspecifiedCertifiedWithinEpsilon) {
  for (double eps : {0.01, 0.05}) {
    EnvSpec spec;
    spec.family = EnvFamily::kMisspecified;
    spec.states = 12;
    spec.actions = 2;
    spec.dim = 6;
    spec.epsilon = eps;
    spec.seed = 4;
    const auto env = make_env(spec);
    EnvSpec base_spec = spec;
    base_spec.family = EnvFamily::kLowRankLinear;
    const auto base = make_env(base_spec);
    EXPECT_EQ(env.feature_table(), base.feature_table());
    EXPECT_EQ(env.mdp().kernel, base.mdp().kernel);
    std::mt19937_64 gen(7);
    std::vector<PolicyTable> pis;
    for (int k = 0; k < 20; ++k) pis.push_back(random_policy_table(env.mdp(), gen, k % 2 == 0));
    const auto cert = certify_misspecification(env, pis, &base);
    EXPECT_LE(cert.epsilon, eps);
    EXPECT_GT(cert.epsilon, 0.0);
  }
}

TEST(MakeEnv, RejectsInvalidSizes) {
  EnvSpec spec;
  spec.family = EnvFamily::kTabularOneHot;
  spec.states = 0;
  EXPECT_THROW(make_env(spec), ConfigError);
  spec.family = EnvFamily::kChain;
  spec.states = 3;
  spec.actions = 3;
  EXPECT_THROW(make_env(spec), ConfigError);
  EXPECT_THROW(env_family_from_string("grid"), ConfigError);
  EXPECT_EQ(env_family_from_string("two_phase_explore"), EnvFamily::kTwoPhaseExplore);
}

TEST(AugmentRandomInitial, PointMassOnSingleState) {
  const auto base = self_loop(1.0, 0.5);
  const auto aug = augment_random_initial(base, {1.0});
  EXPECT_EQ(aug.s_init, StateId{1});
  const auto v = policy_values(aug.env.mdp(), uniform_policy(aug.env.mdp()));
  EXPECT_NEAR(v[1], 1.0, 1e-12);
  EXPECT_NEAR(v[1], 0.5 * v[0], 1e-12);
}

TEST(AugmentRandomInitial, UniformOverFlip) {
  TabularMdp mdp(2, 1, 0.5);
  mdp.prob(0, 0, 1) = mdp.prob(1, 0, 0) = 1.0;
  mdp.reward(0, 0) = 1.0;
  const TabularEnvironment base(std::move(mdp), Eigen::MatrixXd::Identity(2, 2));
  const auto aug = augment_random_initial(base, {0.5, 0.5});
  const auto v = policy_values(aug.env.mdp(), uniform_policy(aug.env.mdp()));
  EXPECT_NEAR(v[2], 0.5, 1e-12);
  EXPECT_EQ(aug.env.feature(StateId{2}, ActionId{0}), Eigen::Vector3d(0, 0, 1));
  EXPECT_EQ(aug.env.feature(StateId{0}, ActionId{0}), Eigen::Vector3d(1, 0, 0));
  EXPECT_EQ(aug.env.mdp().reward(2, 0), 0.0);
}

TEST(AugmentRandomInitial, IdentityOnRandomPolicies) {
  EnvSpec spec;
  spec.family = EnvFamily::kLowRankLinear;
  spec.states = 7;
  spec.actions = 2;
  spec.dim = 3;
  spec.gamma = 0.8;
  const auto base = make_env(spec);
  const std::vector<double> rho{0.1, 0.2, 0.05, 0.15, 0.2, 0.1, 0.2};
  const auto aug = augment_random_initial(base, rho);
  std::mt19937_64 gen(4);
  for (int k = 0; k < 20; ++k) {
    const auto pi = random_policy_table(aug.env.mdp(), gen, k % 2 == 0);
    const auto v = policy_values(aug.env.mdp(), pi);
    double expected = 0.0;
    for (std::size_t s = 0; s < 7; ++s) expected += rho[s] * v[static_cast<Eigen::Index>(s)];
    EXPECT_NEAR(0.8 * expected, v[7], 1e-10);
    EXPECT_LE(fit_q(aug.env, exact_policy_q(aug.env.mdp(), pi)).sup_residual, 1e-9);
  }
  for (Eigen::Index r = 0; r < aug.env.feature_table().rows(); ++r) {
    EXPECT_LE(aug.env.feature_table().row(r).norm(), 1.0 + kFeatureNormSlack);
  }
}

TEST(AugmentRandomInitial, RejectsBadRho) {
  const auto base = self_loop(1.0, 0.5);
  EXPECT_THROW(augment_random_initial(base, {0.5}), ConfigError);
  EXPECT_THROW(augment_random_initial(base, {0.5, 0.5}), ConfigError);
  EXPECT_THROW(augment_random_initial(base, {-1.0}), ConfigError);
}

TEST(TabularText, ExportImportRoundTrip) {
  EnvSpec spec;
  spec.family = EnvFamily::kLowRankLinear;
  spec.states = 6;
  spec.actions = 2;
  spec.dim = 3;
  spec.seed = 9;
  const auto env = make_env(spec);
  const auto back = import_tabular(export_tabular(env));
  EXPECT_EQ(back.mdp().rewards, env.mdp().rewards);
  EXPECT_EQ(back.mdp().kernel, env.mdp().kernel);
  EXPECT_EQ(back.mdp().gamma, env.mdp().gamma);
  EXPECT_EQ(back.feature_table(), env.feature_table());
}

TEST(TabularText, ImportDefaultsToOneHot) {
  const std::string text =
      "tabular_mdp\nstates 2\nactions 1\ngamma 0.5\ninitial 0\nrewards\n1\n0\nkernel\n0 1\n1 0\n";
  const auto env = import_tabular(text);
  EXPECT_EQ(env.feature_table(), Eigen::MatrixXd::Identity(2, 2));
  EXPECT_NEAR(optimal_values(env.mdp()).values[0], 4.0 / 3.0, 1e-12);
  EXPECT_THROW(import_tabular("tabular_mdp\nstates 2\n"), ConfigError);
  EXPECT_THROW(import_tabular(
                   "tabular_mdp\nstates 2\nactions 1\ngamma 0.5\ninitial 0\nrewards\n1\n0\nkernel\n0 0.5\n1 0\n"),
               ConfigError);
}
