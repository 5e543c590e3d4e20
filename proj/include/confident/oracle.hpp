#pragma once

#include "confident/errors.hpp"
#include "confident/tabular.hpp"

#include <Eigen/Dense>
#include <Eigen/LU>

#include <cmath>
#include <vector>

namespace confident {

/// Q values, S rows by A columns.
using QTable = Eigen::MatrixXd;

namespace detail {

inline void require_policy_shape(const TabularMdp& mdp, const PolicyTable& pi) {
  if (pi.size() != mdp.state_count * mdp.action_count) {
    throw DimensionMismatch("policy table: expected S*A entries");
  }
}

inline Eigen::MatrixXd policy_kernel(const TabularMdp& mdp, const PolicyTable& pi) {
  const auto S = static_cast<Eigen::Index>(mdp.state_count);
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(S, S);
  for (std::size_t s = 0; s < mdp.state_count; ++s) {
    for (std::size_t a = 0; a < mdp.action_count; ++a) {
      const double w = pi[mdp.pair_index(s, a)];
      if (w == 0.0) continue;
      for (std::size_t t = 0; t < mdp.state_count; ++t) {
        P(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(t)) += w * mdp.prob(s, a, t);
      }
    }
  }
  return P;
}

/// r(s, a) + gamma * sum_s' P(s'|s, a) V(s').
inline QTable backup(const TabularMdp& mdp, const Eigen::VectorXd& V) {
  QTable Q(static_cast<Eigen::Index>(mdp.state_count), static_cast<Eigen::Index>(mdp.action_count));
  for (std::size_t s = 0; s < mdp.state_count; ++s) {
    for (std::size_t a = 0; a < mdp.action_count; ++a) {
      double next = 0.0;
      for (std::size_t t = 0; t < mdp.state_count; ++t) {
        next += mdp.prob(s, a, t) * V[static_cast<Eigen::Index>(t)];
      }
      Q(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a)) = mdp.reward(s, a) + mdp.gamma * next;
    }
  }
  return Q;
}

inline Eigen::VectorXd average_over_policy(const TabularMdp& mdp, const PolicyTable& pi,
                                           const QTable& Q) {
  Eigen::VectorXd V = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(mdp.state_count));
  for (std::size_t s = 0; s < mdp.state_count; ++s) {
    for (std::size_t a = 0; a < mdp.action_count; ++a) {
      V[static_cast<Eigen::Index>(s)] +=
          pi[mdp.pair_index(s, a)] * Q(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a));
    }
  }
  return V;
}

}  // namespace detail

/// Deterministic policy as a one-hot table.
inline PolicyTable deterministic_policy(const TabularMdp& mdp, const std::vector<std::size_t>& actions) {
  PolicyTable pi(mdp.state_count * mdp.action_count, 0.0);
  for (std::size_t s = 0; s < mdp.state_count; ++s) pi[mdp.pair_index(s, actions.at(s))] = 1.0;
  return pi;
}

inline PolicyTable uniform_policy(const TabularMdp& mdp) {
  return PolicyTable(mdp.state_count * mdp.action_count, 1.0 / static_cast<double>(mdp.action_count));
}

/// Q_pi by a direct solve of V = r_pi + gamma P_pi V, then one backup.
inline QTable exact_policy_q(const TabularMdp& mdp, const PolicyTable& pi) {
  detail::require_policy_shape(mdp, pi);
  const auto S = static_cast<Eigen::Index>(mdp.state_count);
  Eigen::VectorXd r_pi = Eigen::VectorXd::Zero(S);
  for (std::size_t s = 0; s < mdp.state_count; ++s) {
    for (std::size_t a = 0; a < mdp.action_count; ++a) {
      r_pi[static_cast<Eigen::Index>(s)] += pi[mdp.pair_index(s, a)] * mdp.reward(s, a);
    }
  }
  const Eigen::MatrixXd system =
      Eigen::MatrixXd::Identity(S, S) - mdp.gamma * detail::policy_kernel(mdp, pi);
  const Eigen::VectorXd V = system.partialPivLu().solve(r_pi);
  return detail::backup(mdp, V);
}

/// V_pi(s) = sum_a pi(a|s) Q_pi(s, a).
inline Eigen::VectorXd policy_values(const TabularMdp& mdp, const PolicyTable& pi) {
  return detail::average_over_policy(mdp, pi, exact_policy_q(mdp, pi));
}

/// Expected return over the first n + 1 steps: n + 1 applications of the
/// policy Bellman operator starting from zero.
inline QTable truncated_policy_q(const TabularMdp& mdp, const PolicyTable& pi, std::size_t n) {
  detail::require_policy_shape(mdp, pi);
  QTable Q = QTable::Zero(static_cast<Eigen::Index>(mdp.state_count),
                          static_cast<Eigen::Index>(mdp.action_count));
  for (std::size_t step = 0; step <= n; ++step) {
    Q = detail::backup(mdp, detail::average_over_policy(mdp, pi, Q));
  }
  return Q;
}

/// sup_s |(r + gamma P_pi Q)(s, a) - Q(s, a)|.
inline double bellman_residual(const TabularMdp& mdp, const PolicyTable& pi, const QTable& Q) {
  return (detail::backup(mdp, detail::average_over_policy(mdp, pi, Q)) - Q).cwiseAbs().maxCoeff();
}

struct OptimalSolution {
  Eigen::VectorXd values;
  QTable q;
  std::vector<std::size_t> actions;  // greedy, smallest index on ties
};

/// V* by value iteration, stopped once successive iterates differ by less
/// than 1e-12 (1 - gamma) / (2 gamma) in sup norm, then polished by exact
/// policy iteration so the result does not depend on round-off in the
/// stopping test.
inline OptimalSolution optimal_values(const TabularMdp& mdp) {
  mdp.validate();
  const auto S = static_cast<Eigen::Index>(mdp.state_count);
  const double stop = 1e-12 * (1.0 - mdp.gamma) / (2.0 * mdp.gamma);
  Eigen::VectorXd V = Eigen::VectorXd::Zero(S);
  for (int it = 0; it < 200000; ++it) {
    const Eigen::VectorXd next = detail::backup(mdp, V).rowwise().maxCoeff();
    const double change = (next - V).cwiseAbs().maxCoeff();
    V = next;
    if (change < stop) break;
  }
  auto greedy = [&](const QTable& Q, const std::vector<std::size_t>* incumbent) {
    std::vector<std::size_t> actions(mdp.state_count, 0);
    for (Eigen::Index s = 0; s < S; ++s) {
      std::size_t best = incumbent ? (*incumbent)[static_cast<std::size_t>(s)] : 0;
      for (Eigen::Index a = 0; a < Q.cols(); ++a) {
        const double margin = 1e-12 * (1.0 + std::abs(Q(s, static_cast<Eigen::Index>(best))));
        const bool better = incumbent ? Q(s, a) > Q(s, static_cast<Eigen::Index>(best)) + margin
                                      : Q(s, a) > Q(s, static_cast<Eigen::Index>(best));
        if (better) best = static_cast<std::size_t>(a);
      }
      actions[static_cast<std::size_t>(s)] = best;
    }
    return actions;
  };
  std::vector<std::size_t> actions = greedy(detail::backup(mdp, V), nullptr);
  QTable Q;
  for (int it = 0; it < 1000; ++it) {
    Q = exact_policy_q(mdp, deterministic_policy(mdp, actions));
    auto improved = greedy(Q, &actions);
    if (improved == actions) break;
    actions = std::move(improved);
  }
  OptimalSolution out;
  out.q = Q;
  out.values = Q.rowwise().maxCoeff();
  // Report the smallest optimal index for determinism.
  out.actions = greedy(Q, nullptr);
  for (Eigen::Index s = 0; s < S; ++s) {
    const auto& row = Q.row(s);
    const double top = row.maxCoeff();
    for (Eigen::Index a = 0; a < row.size(); ++a) {
      if (row[a] >= top - 1e-12 * (1.0 + std::abs(top))) {
        out.actions[static_cast<std::size_t>(s)] = static_cast<std::size_t>(a);
        break;
      }
    }
  }
  return out;
}

}  // namespace confident
