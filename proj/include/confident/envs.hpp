#pragma once

#include "confident/coreset.hpp"
#include "confident/errors.hpp"
#include "confident/oracle.hpp"
#include "confident/tabular.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace confident {

enum class EnvFamily { kTabularOneHot, kLowRankLinear, kMisspecified, kTwoPhaseExplore, kChain };

inline std::string to_string(EnvFamily f) {
  switch (f) {
    case EnvFamily::kTabularOneHot: return "tabular_onehot";
    case EnvFamily::kLowRankLinear: return "low_rank_linear";
    case EnvFamily::kMisspecified: return "misspecified";
    case EnvFamily::kTwoPhaseExplore: return "two_phase_explore";
    case EnvFamily::kChain: return "chain";
  }
  return "unknown";
}

inline EnvFamily env_family_from_string(const std::string& name) {
  for (auto f : {EnvFamily::kTabularOneHot, EnvFamily::kLowRankLinear, EnvFamily::kMisspecified,
                 EnvFamily::kTwoPhaseExplore, EnvFamily::kChain}) {
    if (to_string(f) == name) return f;
  }
  throw ConfigError("unknown environment family '" + name + "'");
}

/// Benchmark description. `dim` is only read by the low-rank families;
/// `epsilon` only by the misspecified family.
struct EnvSpec {
  EnvFamily family = EnvFamily::kChain;
  std::size_t states = 5;
  std::size_t actions = 2;
  std::size_t dim = 4;
  double epsilon = 0.0;
  double gamma = 0.9;
  std::uint64_t seed = 0;
  std::size_t branching = 3;
};

namespace detail {

inline Eigen::MatrixXd one_hot_features(std::size_t states, std::size_t actions) {
  const auto pairs = static_cast<Eigen::Index>(states * actions);
  return Eigen::MatrixXd::Identity(pairs, pairs);
}

/// A random probability vector supported on `support` distinct indices.
inline std::vector<double> sparse_distribution(std::size_t size, std::size_t support,
                                               std::mt19937_64& gen) {
  std::vector<std::size_t> idx(size);
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), gen);
  std::exponential_distribution<double> expo(1.0);
  std::vector<double> p(size, 0.0);
  double total = 0.0;
  const std::size_t k = std::min(support, size);
  for (std::size_t i = 0; i < k; ++i) {
    p[idx[i]] = expo(gen) + 1e-3;
    total += p[idx[i]];
  }
  for (double& x : p) x /= total;
  return p;
}

// Exact stochastic rows: push the rounding residue onto the largest entry.
inline void normalize_rows(TabularMdp& mdp) {
  const std::size_t S = mdp.state_count;
  for (std::size_t sa = 0; sa < S * mdp.action_count; ++sa) {
    double* row = mdp.kernel.data() + sa * S;
    double total = std::accumulate(row, row + S, 0.0);
    for (std::size_t t = 0; t < S; ++t) row[t] /= total;
    total = std::accumulate(row, row + S, 0.0);
    *std::max_element(row, row + S) += 1.0 - total;
  }
}

inline TabularEnvironment make_random_tabular(const EnvSpec& spec) {
  std::mt19937_64 gen(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  TabularMdp mdp(spec.states, spec.actions, spec.gamma);
  for (std::size_t s = 0; s < spec.states; ++s) {
    for (std::size_t a = 0; a < spec.actions; ++a) {
      mdp.reward(s, a) = unit(gen);
      const auto p = sparse_distribution(spec.states, spec.branching, gen);
      for (std::size_t t = 0; t < spec.states; ++t) mdp.prob(s, a, t) = p[t];
    }
  }
  normalize_rows(mdp);
  return TabularEnvironment(std::move(mdp), one_hot_features(spec.states, spec.actions));
}

/// Linear MDP: phi on the probability simplex, P = Phi * mu, r = Phi * theta.
/// Every Q_pi is then exactly linear in phi.
inline TabularEnvironment make_low_rank(const EnvSpec& spec, double reward_noise) {
  std::mt19937_64 gen(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::exponential_distribution<double> expo(1.0);
  const std::size_t S = spec.states, A = spec.actions, d = spec.dim;
  Eigen::MatrixXd phi(static_cast<Eigen::Index>(S * A), static_cast<Eigen::Index>(d));
  for (Eigen::Index r = 0; r < phi.rows(); ++r) {
    for (Eigen::Index i = 0; i < phi.cols(); ++i) phi(r, i) = expo(gen);
    phi.row(r) /= phi.row(r).sum();
  }
  std::vector<std::vector<double>> mu(d);
  for (auto& row : mu) row = sparse_distribution(S, spec.branching, gen);
  Eigen::VectorXd theta(static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < theta.size(); ++i) theta[i] = unit(gen);

  TabularMdp mdp(S, A, spec.gamma);
  std::mt19937_64 noise_gen(spec.seed ^ 0x6d697373ULL);
  std::uniform_real_distribution<double> sym(-1.0, 1.0);
  for (std::size_t s = 0; s < S; ++s) {
    for (std::size_t a = 0; a < A; ++a) {
      const auto row = static_cast<Eigen::Index>(s * A + a);
      const double base = phi.row(row).dot(theta);
      mdp.reward(s, a) = std::clamp(base + reward_noise * sym(noise_gen), 0.0, 1.0);
      for (std::size_t t = 0; t < S; ++t) {
        double p = 0.0;
        for (std::size_t i = 0; i < d; ++i) p += phi(row, static_cast<Eigen::Index>(i)) * mu[i][t];
        mdp.prob(s, a, t) = p;
      }
    }
  }
  normalize_rows(mdp);
  return TabularEnvironment(std::move(mdp), std::move(phi));
}

inline TabularEnvironment make_chain(const EnvSpec& spec) {
  const std::size_t S = spec.states;
  TabularMdp mdp(S, 2, spec.gamma);
  for (std::size_t s = 0; s < S; ++s) {
    mdp.prob(s, 0, s == 0 ? 0 : s - 1) = 1.0;
    mdp.prob(s, 1, std::min(s + 1, S - 1)) = 1.0;
  }
  mdp.reward(S - 1, 1) = 1.0;
  return TabularEnvironment(std::move(mdp), one_hot_features(S, 2));
}

/// A corridor of `states - 1` aliased cells ending in an absorbing goal with
/// its own feature direction. "right" pays 0.1 and advances, "left" resets
/// to the start. Uniform play essentially never reaches the goal, greedy
/// play walks straight into it, so the goal is discovered only after the
/// policy has improved.
inline TabularEnvironment make_two_phase(const EnvSpec& spec) {
  const std::size_t S = spec.states;
  const std::size_t goal = S - 1;
  TabularMdp mdp(S, 2, spec.gamma);
  Eigen::MatrixXd phi = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(S * 2), 3);
  for (std::size_t s = 0; s < goal; ++s) {
    mdp.prob(s, 0, 0) = 1.0;
    mdp.prob(s, 1, s + 1) = 1.0;
    mdp.reward(s, 1) = 0.1;
    phi(static_cast<Eigen::Index>(2 * s + 1), 0) = 1.0;
    phi(static_cast<Eigen::Index>(2 * s), 1) = 1.0;
  }
  for (std::size_t a = 0; a < 2; ++a) {
    mdp.prob(goal, a, goal) = 1.0;
    mdp.reward(goal, a) = 1.0;
    phi(static_cast<Eigen::Index>(2 * goal + a), 2) = 1.0;
  }
  return TabularEnvironment(std::move(mdp), std::move(phi));
}

}  // namespace detail

/// Builds a benchmark environment. Every family is tabular, so the returned
/// environment doubles as the oracle's exact mirror via env.mdp().
inline TabularEnvironment make_env(const EnvSpec& spec) {
  if (spec.actions == 0) throw ConfigError("env: actions must be positive");
  if (!(spec.gamma > 0.0 && spec.gamma < 1.0)) throw ConfigError("env: gamma must be in (0,1)");
  switch (spec.family) {
    case EnvFamily::kTabularOneHot:
      if (spec.states == 0) throw ConfigError("env: states must be positive");
      return detail::make_random_tabular(spec);
    case EnvFamily::kLowRankLinear:
    case EnvFamily::kMisspecified: {
      if (spec.states == 0 || spec.dim == 0) throw ConfigError("env: states and dim must be positive");
      if (spec.epsilon < 0.0) throw ConfigError("env: epsilon must be non-negative");
      const double noise =
          spec.family == EnvFamily::kMisspecified ? spec.epsilon * (1.0 - spec.gamma) : 0.0;
      return detail::make_low_rank(spec, noise);
    }
    case EnvFamily::kTwoPhaseExplore:
      if (spec.states < 2) throw ConfigError("env: two_phase_explore needs at least 2 states");
      if (spec.actions != 2) throw ConfigError("env: two_phase_explore has exactly 2 actions");
      return detail::make_two_phase(spec);
    case EnvFamily::kChain:
      if (spec.states == 0) throw ConfigError("env: states must be positive");
      if (spec.actions != 2) throw ConfigError("env: chain has exactly 2 actions");
      return detail::make_chain(spec);
  }
  throw ConfigError("env: unknown family");
}

/// Random-initial-state reduction: an auxiliary start state whose every
/// action pays 0 and jumps to a draw from rho, carrying its own extra
/// feature coordinate.
struct AugmentedEnv {
  TabularEnvironment env;
  StateId s_init;
  std::vector<double> rho;
};

inline AugmentedEnv augment_random_initial(const TabularEnvironment& base,
                                           const std::vector<double>& rho) {
  const TabularMdp& mdp = base.mdp();
  const std::size_t S = mdp.state_count, A = mdp.action_count;
  if (rho.size() != S) throw ConfigError("augment: rho must have one entry per state");
  double total = 0.0;
  for (double p : rho) {
    if (p < 0.0) throw ConfigError("augment: rho has a negative entry");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-12) throw ConfigError("augment: rho must sum to 1");

  TabularMdp aug(S + 1, A, mdp.gamma);
  for (std::size_t s = 0; s < S; ++s) {
    for (std::size_t a = 0; a < A; ++a) {
      aug.reward(s, a) = mdp.reward(s, a);
      for (std::size_t t = 0; t < S; ++t) aug.prob(s, a, t) = mdp.prob(s, a, t);
    }
  }
  for (std::size_t a = 0; a < A; ++a) {
    for (std::size_t t = 0; t < S; ++t) aug.prob(S, a, t) = rho[t];
  }
  aug.initial_state = S;

  const Eigen::MatrixXd& phi = base.feature_table();
  const Eigen::Index d = phi.cols();
  Eigen::MatrixXd phi_aug = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>((S + 1) * A), d + 1);
  phi_aug.topLeftCorner(phi.rows(), d) = phi;
  for (std::size_t a = 0; a < A; ++a) phi_aug(static_cast<Eigen::Index>(S * A + a), d) = 1.0;
  return AugmentedEnv{TabularEnvironment(std::move(aug), std::move(phi_aug)), StateId{S}, rho};
}

/// A random policy table; deterministic tables are one-hot.
inline PolicyTable random_policy_table(const TabularMdp& mdp, std::mt19937_64& gen,
                                       bool deterministic) {
  PolicyTable pi(mdp.state_count * mdp.action_count, 0.0);
  std::uniform_int_distribution<std::size_t> pick(0, mdp.action_count - 1);
  std::exponential_distribution<double> expo(1.0);
  for (std::size_t s = 0; s < mdp.state_count; ++s) {
    if (deterministic) {
      pi[mdp.pair_index(s, pick(gen))] = 1.0;
      continue;
    }
    double total = 0.0;
    for (std::size_t a = 0; a < mdp.action_count; ++a) {
      pi[mdp.pair_index(s, a)] = expo(gen);
      total += pi[mdp.pair_index(s, a)];
    }
    for (std::size_t a = 0; a < mdp.action_count; ++a) pi[mdp.pair_index(s, a)] /= total;
  }
  return pi;
}

/// Least-squares fit of Q_pi onto the feature table: returns the weights
/// and the sup-norm residual.
struct LinearFit {
  WeightVector w;
  double sup_residual = 0.0;
};

inline LinearFit fit_q(const TabularEnvironment& env, const QTable& Q) {
  const Eigen::MatrixXd& phi = env.feature_table();
  Eigen::VectorXd target(phi.rows());
  const std::size_t A = env.action_count();
  for (Eigen::Index r = 0; r < target.size(); ++r) {
    target[r] = Q(r / static_cast<Eigen::Index>(A), r % static_cast<Eigen::Index>(A));
  }
  LinearFit fit;
  fit.w = phi.completeOrthogonalDecomposition().solve(target);
  fit.sup_residual = (phi * fit.w - target).cwiseAbs().maxCoeff();
  return fit;
}

/// Certified misspecification over a set of policies: for each policy the
/// sup residual of some linear predictor upper-bounds the best achievable
/// sup error. Candidates are the least-squares fit and, when a realizable
/// reference is given, the reference policy's exact weights.
struct MisspecificationCertificate {
  double epsilon = 0.0;
  double max_weight_norm = 0.0;
};

inline MisspecificationCertificate certify_misspecification(
    const TabularEnvironment& env, const std::vector<PolicyTable>& policies,
    const TabularEnvironment* realizable_reference = nullptr) {
  MisspecificationCertificate cert;
  const std::size_t A = env.action_count();
  const Eigen::MatrixXd& phi = env.feature_table();
  for (const auto& pi : policies) {
    const QTable Q = exact_policy_q(env.mdp(), pi);
    LinearFit best = fit_q(env, Q);
    if (realizable_reference != nullptr) {
      const LinearFit ref = fit_q(*realizable_reference, exact_policy_q(realizable_reference->mdp(), pi));
      double sup = 0.0;
      for (Eigen::Index r = 0; r < phi.rows(); ++r) {
        const double q = Q(r / static_cast<Eigen::Index>(A), r % static_cast<Eigen::Index>(A));
        sup = std::max(sup, std::abs(phi.row(r).dot(ref.w) - q));
      }
      if (sup < best.sup_residual) best = LinearFit{ref.w, sup};
    }
    cert.epsilon = std::max(cert.epsilon, best.sup_residual);
    cert.max_weight_norm = std::max(cert.max_weight_norm, best.w.norm());
  }
  return cert;
}

// Plain-text tabular exchange format:
//
//   tabular_mdp
//   states S / actions A / gamma g / initial i
//   rewards      followed by S rows of A numbers
//   kernel       followed by S*A rows of S numbers (row s*A + a)
//   features d   optional, followed by S*A rows of d numbers
//
// Without a features block the importer uses one-hot features.

inline std::string export_tabular(const TabularEnvironment& env) {
  const TabularMdp& mdp = env.mdp();
  std::ostringstream out;
  out << "tabular_mdp\n"
      << "states " << mdp.state_count << "\nactions " << mdp.action_count << "\ngamma "
      << format_double(mdp.gamma) << "\ninitial " << mdp.initial_state << "\nrewards\n";
  for (std::size_t s = 0; s < mdp.state_count; ++s) {
    for (std::size_t a = 0; a < mdp.action_count; ++a) {
      out << (a ? " " : "") << format_double(mdp.reward(s, a));
    }
    out << '\n';
  }
  out << "kernel\n";
  for (std::size_t sa = 0; sa < mdp.state_count * mdp.action_count; ++sa) {
    for (std::size_t t = 0; t < mdp.state_count; ++t) {
      out << (t ? " " : "") << format_double(mdp.kernel[sa * mdp.state_count + t]);
    }
    out << '\n';
  }
  const Eigen::MatrixXd& phi = env.feature_table();
  out << "features " << phi.cols() << '\n';
  for (Eigen::Index r = 0; r < phi.rows(); ++r) {
    for (Eigen::Index i = 0; i < phi.cols(); ++i) out << (i ? " " : "") << format_double(phi(r, i));
    out << '\n';
  }
  return out.str();
}

inline TabularEnvironment import_tabular(const std::string& text) {
  std::istringstream in(text);
  std::string word;
  auto expect = [&](const std::string& want) {
    if (!(in >> word) || word != want) {
      throw ConfigError("tabular import: expected '" + want + "', found '" + word + "'");
    }
  };
  auto read_number = [&]() {
    double x;
    if (!(in >> x)) throw ConfigError("tabular import: truncated numeric block");
    return x;
  };
  expect("tabular_mdp");
  std::size_t S = 0, A = 0, init = 0;
  double gamma = 0.0;
  expect("states");
  in >> S;
  expect("actions");
  in >> A;
  expect("gamma");
  in >> gamma;
  expect("initial");
  in >> init;
  if (!in || S == 0 || A == 0) throw ConfigError("tabular import: bad header");
  TabularMdp mdp(S, A, gamma);
  mdp.initial_state = init;
  expect("rewards");
  for (double& r : mdp.rewards) r = read_number();
  expect("kernel");
  for (double& p : mdp.kernel) p = read_number();
  Eigen::MatrixXd phi;
  if (in >> word) {
    if (word != "features") throw ConfigError("tabular import: unexpected token '" + word + "'");
    std::size_t d = 0;
    if (!(in >> d) || d == 0) throw ConfigError("tabular import: bad feature dimension");
    phi.resize(static_cast<Eigen::Index>(S * A), static_cast<Eigen::Index>(d));
    for (Eigen::Index r = 0; r < phi.rows(); ++r) {
      for (Eigen::Index i = 0; i < phi.cols(); ++i) phi(r, i) = read_number();
    }
  } else {
    phi = detail::one_hot_features(S, A);
  }
  return TabularEnvironment(std::move(mdp), std::move(phi));
}

}  // namespace confident
