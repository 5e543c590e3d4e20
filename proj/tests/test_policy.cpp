#include "confident/policy.hpp"
#include "test_helpers.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <memory>
#include <numeric>
#include <random>

using namespace confident;
using testing_helpers::table_map;

namespace {

FeatureMap two_action_basis() { return table_map(Eigen::MatrixXd::Identity(2, 2), 2); }

PolitexPolicy politex_with(std::vector<WeightVector> ws, double alpha, double gamma) {
  auto hist = std::make_shared<std::vector<WeightVector>>(std::move(ws));
  return PolitexPolicy{hist, hist->size(), alpha, gamma};
}

}  // namespace

TEST(ClippedQ, ClipsToDiscountedRange) {
  const WeightVector w = Eigen::Vector2d(1.0, 0.0);
  EXPECT_EQ(clipped_q(w, Eigen::Vector2d(-0.3, 0), 0.9), 0.0);
  EXPECT_NEAR(clipped_q(w, Eigen::Vector2d(15, 0), 0.9), 10.0, 1e-12);
  EXPECT_DOUBLE_EQ(clipped_q(w, Eigen::Vector2d(3.2, 0), 0.9), 3.2);
  EXPECT_THROW(clipped_q(w, Eigen::Vector3d(1, 0, 0), 0.9), DimensionMismatch);
}

TEST(ActionProbabilities, GreedyPicksArgmax) {
  const auto probs = action_probabilities(GreedyPolicy{Eigen::Vector2d(1, 0)}, StateId{0},
                                          two_action_basis(), 2);
  EXPECT_EQ(probs, (std::vector<double>{1.0, 0.0}));
}

TEST(ActionProbabilities, GreedyTiesGoToSmallestIndex) {
  // Three actions with equal value; every permutation of the table rows
  // that keeps values equal must still pick action 0.
  Eigen::MatrixXd phi(3, 2);
  phi << 0.5, 0.5, 0.5, 0.5, 0.5, 0.5;
  const auto probs = action_probabilities(GreedyPolicy{Eigen::Vector2d(1, 1)}, StateId{0},
                                          table_map(phi, 3), 3);
  EXPECT_EQ(probs, (std::vector<double>{1.0, 0.0, 0.0}));
  Eigen::MatrixXd phi2(3, 2);
  phi2 << 0.1, 0.0, 0.5, 0.5, 0.5, 0.5;
  EXPECT_EQ(action_probabilities(GreedyPolicy{Eigen::Vector2d(1, 1)}, StateId{0}, table_map(phi2, 3), 3),
            (std::vector<double>{0.0, 1.0, 0.0}));
}

TEST(ActionProbabilities, EmptyPolitexIsUniform) {
  const FeatureMap f = table_map(Eigen::MatrixXd::Identity(3, 3), 3);
  const auto probs = action_probabilities(politex_with({}, 0.5, 0.9), StateId{0}, f, 3);
  for (double p : probs) EXPECT_DOUBLE_EQ(p, 1.0 / 3.0);
  EXPECT_EQ(action_probabilities(UniformPolicy{}, StateId{0}, f, 3), probs);
}

TEST(ActionProbabilities, PolitexSoftmaxOfClippedSums) {
  // Clipped Q logits (10, 0) from w = (12, -1): 12 clips to 10, -1 to 0.
  const auto p = politex_with({Eigen::Vector2d(12, -1)}, 0.1, 0.9);
  const auto probs = action_probabilities(p, StateId{0}, two_action_basis(), 2);
  const double e = std::exp(1.0);
  EXPECT_NEAR(probs[0], e / (e + 1), 1e-12);
  EXPECT_NEAR(probs[1], 1 / (e + 1), 1e-12);
  EXPECT_NEAR(probs[0], 0.7311, 1e-4);
}

TEST(ActionProbabilities, PolitexUsesOnlyFirstLengthWeights) {
  auto hist = std::make_shared<std::vector<WeightVector>>(
      std::vector<WeightVector>{Eigen::Vector2d(1, 0), Eigen::Vector2d(0, 5)});
  const PolitexPolicy first{hist, 1, 1.0, 0.9};
  const auto probs = action_probabilities(first, StateId{0}, two_action_basis(), 2);
  EXPECT_NEAR(probs[0], std::exp(1.0) / (std::exp(1.0) + 1), 1e-12);
}

TEST(Softmax, ShiftInvariantAndNormalized) {
  std::mt19937_64 gen(3);
  std::normal_distribution<double> normal(0, 30);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> a(5), b(5);
    const double shift = normal(gen);
    for (std::size_t i = 0; i < a.size(); ++i) {
      a[i] = normal(gen);
      b[i] = a[i] + shift;
    }
    softmax_in_place(a);
    softmax_in_place(b);
    EXPECT_NEAR(std::accumulate(a.begin(), a.end(), 0.0), 1.0, 1e-12);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
  }
}

TEST(SampleAction, InverseCdf) {
  const std::vector<double> uniform{0.5, 0.5};
  EXPECT_EQ(sample_from(uniform, 0.75).index, 1u);
  EXPECT_EQ(sample_from(uniform, 0.25).index, 0u);
  const std::vector<double> politex{0.7311, 0.2689};
  EXPECT_EQ(sample_from(politex, 0.8).index, 1u);
  EXPECT_EQ(sample_from(politex, 0.7).index, 0u);
  const std::vector<double> hole{0.5, 0.0, 0.5};
  EXPECT_EQ(sample_from(hole, 0.9999999).index, 2u);
}

TEST(SampleAction, GreedyIgnoresRng) {
  RngStream rng(StreamKey{1, 2, 3, 4, 5, 0});
  const PolicySnapshot g = GreedyPolicy{Eigen::Vector2d(0, 1)};
  for (int i = 0; i < 10; ++i) EXPECT_EQ(sample_action(g, StateId{0}, two_action_basis(), 2, rng).index, 1u);
  EXPECT_EQ(rng.counter(), 0u);
}

TEST(SampleAction, UniformConsumesOneDraw) {
  RngStream rng(StreamKey{9, 0, 0, 0, 0, 1});
  const double u = rng.uniform_at(0);
  const ActionId a = sample_action(UniformPolicy{}, StateId{0}, two_action_basis(), 2, rng);
  EXPECT_EQ(a.index, u < 0.5 ? 0u : 1u);
  EXPECT_EQ(rng.counter(), 1u);
}

TEST(FeatureMap, RejectsWrongDimension) {
  const FeatureMap bad(3, [](StateId, ActionId) { return FeatureVector(Eigen::Vector2d(1, 0)); });
  EXPECT_THROW(bad(StateId{0}, ActionId{0}), DimensionMismatch);
}
