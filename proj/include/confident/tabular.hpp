#pragma once

#include "confident/errors.hpp"
#include "confident/policy.hpp"
#include "confident/types.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace confident {

/// Finite discounted MDP (S, A, r, P, rho, gamma) with dense storage.
struct TabularMdp {
  std::size_t state_count = 0;
  std::size_t action_count = 0;
  std::vector<double> rewards;  // [s * A + a]
  std::vector<double> kernel;   // [(s * A + a) * S + s']
  double gamma = 0.9;
  std::size_t initial_state = 0;

  TabularMdp() = default;
  TabularMdp(std::size_t states, std::size_t actions, double discount)
      : state_count(states),
        action_count(actions),
        rewards(states * actions, 0.0),
        kernel(states * actions * states, 0.0),
        gamma(discount) {}

  std::size_t pair_index(std::size_t s, std::size_t a) const { return s * action_count + a; }
  double reward(std::size_t s, std::size_t a) const { return rewards[pair_index(s, a)]; }
  double& reward(std::size_t s, std::size_t a) { return rewards[pair_index(s, a)]; }
  double prob(std::size_t s, std::size_t a, std::size_t next) const {
    return kernel[pair_index(s, a) * state_count + next];
  }
  double& prob(std::size_t s, std::size_t a, std::size_t next) {
    return kernel[pair_index(s, a) * state_count + next];
  }

  /// Throws ConfigError unless rows are stochastic within 1e-12 and
  /// rewards lie in [0, 1].
  void validate() const {
    if (state_count == 0 || action_count == 0) throw ConfigError("tabular mdp: empty");
    if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("tabular mdp: gamma must be in (0,1)");
    if (initial_state >= state_count) throw ConfigError("tabular mdp: initial state out of range");
    if (rewards.size() != state_count * action_count ||
        kernel.size() != state_count * action_count * state_count) {
      throw ConfigError("tabular mdp: array sizes do not match (S, A)");
    }
    for (double r : rewards) {
      if (!(r >= 0.0 && r <= 1.0)) throw ConfigError("tabular mdp: reward outside [0,1]");
    }
    for (std::size_t sa = 0; sa < state_count * action_count; ++sa) {
      double total = 0.0;
      for (std::size_t t = 0; t < state_count; ++t) {
        const double p = kernel[sa * state_count + t];
        if (p < 0.0) throw ConfigError("tabular mdp: negative transition probability");
        total += p;
      }
      if (std::abs(total - 1.0) > 1e-12) {
        throw ConfigError("tabular mdp: kernel row " + std::to_string(sa) + " sums to " +
                          std::to_string(total));
      }
    }
  }
};

/// Row-stochastic S x A policy table, [s * A + a].
using PolicyTable = std::vector<double>;

/// Simulator over a TabularMdp with a dense feature table (row s * A + a).
/// Successors of each (s, a) are ordered by ascending state index.
class TabularEnvironment {
 public:
  TabularEnvironment(TabularMdp mdp, Eigen::MatrixXd features)
      : mdp_(std::make_shared<const TabularMdp>(std::move(mdp))),
        features_(std::make_shared<const Eigen::MatrixXd>(std::move(features))) {
    mdp_->validate();
    const std::size_t pairs = mdp_->state_count * mdp_->action_count;
    if (static_cast<std::size_t>(features_->rows()) != pairs || features_->cols() == 0) {
      throw ConfigError("tabular environment: feature table must have S*A rows");
    }
    for (Eigen::Index r = 0; r < features_->rows(); ++r) {
      if (features_->row(r).norm() > 1.0 + kFeatureNormSlack) {
        throw ConfigError("tabular environment: feature norm exceeds 1 at row " +
                          std::to_string(r));
      }
    }
    successors_.resize(pairs);
    for (std::size_t sa = 0; sa < pairs; ++sa) {
      for (std::size_t t = 0; t < mdp_->state_count; ++t) {
        const double p = mdp_->kernel[sa * mdp_->state_count + t];
        if (p > 0.0) successors_[sa].emplace_back(t, p);
      }
    }
  }

  std::size_t action_count() const noexcept { return mdp_->action_count; }
  std::size_t state_count() const noexcept { return mdp_->state_count; }
  StateId initial_state() const noexcept { return StateId{mdp_->initial_state}; }
  const TabularMdp& mdp() const noexcept { return *mdp_; }
  std::size_t feature_dim() const noexcept { return static_cast<std::size_t>(features_->cols()); }
  const Eigen::MatrixXd& feature_table() const noexcept { return *features_; }

  FeatureVector feature(StateId s, ActionId a) const {
    return features_->row(static_cast<Eigen::Index>(row(s, a))).transpose();
  }

  FeatureMap feature_map() const {
    auto table = features_;
    const std::size_t actions = mdp_->action_count;
    const std::size_t states = mdp_->state_count;
    return FeatureMap(feature_dim(), [table, actions, states](StateId s, ActionId a) {
      if (s.value >= states || a.index >= actions) {
        throw std::out_of_range("feature map: (state, action) outside the table");
      }
      return FeatureVector(
          table->row(static_cast<Eigen::Index>(s.value * actions + a.index)).transpose());
    });
  }

  Transition sample(StateId s, ActionId a, double u) const {
    const auto& succ = successors_[row(s, a)];
    double cumulative = 0.0;
    std::size_t next = succ.back().first;
    for (const auto& [t, p] : succ) {
      cumulative += p;
      if (u < cumulative) {
        next = t;
        break;
      }
    }
    return Transition{mdp_->reward(s.value, a.index), StateId{next}};
  }

 private:
  std::size_t row(StateId s, ActionId a) const {
    if (s.value >= mdp_->state_count || a.index >= mdp_->action_count) {
      throw std::out_of_range("tabular environment: (state, action) out of range");
    }
    return static_cast<std::size_t>(s.value) * mdp_->action_count + a.index;
  }

  std::shared_ptr<const TabularMdp> mdp_;
  std::shared_ptr<const Eigen::MatrixXd> features_;
  std::vector<std::vector<std::pair<std::size_t, double>>> successors_;
};

/// Materializes a policy snapshot over every state of a tabular environment.
inline PolicyTable policy_table(const PolicySnapshot& policy, const TabularEnvironment& env) {
  const auto fmap = env.feature_map();
  const std::size_t A = env.action_count();
  PolicyTable table(env.state_count() * A);
  for (std::size_t s = 0; s < env.state_count(); ++s) {
    const auto probs = action_probabilities(policy, StateId{s}, fmap, A);
    std::copy(probs.begin(), probs.end(), table.begin() + static_cast<std::ptrdiff_t>(s * A));
  }
  return table;
}

}  // namespace confident
