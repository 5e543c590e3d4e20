#pragma once

#include "confident/errors.hpp"
#include "confident/planner.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>

namespace confident {

/// Parameter choices that the sample-complexity guarantees prescribe. The
/// raw_* fields hold the unrounded formula values; n, K, m are rounded up.
struct TheoryParams {
  Algorithm algo = Algorithm::kLspi;
  double tau = 1.0;
  double lambda = 0.0;
  std::optional<double> alpha;
  double raw_n = 0.0;
  double raw_K = 0.0;
  double raw_m = 0.0;
  std::size_t n = 0;
  std::size_t K = 0;
  std::size_t m = 0;
  /// Sub-optimality ceiling promised by the misspecified variants.
  std::optional<double> predicted_bound;
};

namespace detail {

inline std::size_t ceil_count(double x, std::size_t floor_value) {
  if (!std::isfinite(x)) throw ConfigError("theory: parameter formula is not finite");
  return std::max(floor_value, static_cast<std::size_t>(std::ceil(x)));
}

inline void require_positive(double x, const char* name) {
  if (!(x > 0.0) || !std::isfinite(x)) {
    throw ConfigError(std::string("theory: ") + name + " must be positive");
  }
}

inline void require_discount(double gamma) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("theory: gamma must be in (0,1)");
}

// 1 + log(1 + 1/lambda), recurring in every m and n formula.
inline double log_factor(double lambda) { return 1.0 + std::log1p(1.0 / lambda); }

inline double alpha_for(double gamma, std::size_t actions, double K) {
  return (1.0 - gamma) * std::sqrt(2.0 * std::log(static_cast<double>(actions)) / K);
}

}  // namespace detail

/// Realizable LSPI (tau = 1).
inline TheoryParams lspi_params_from_theorem(double kappa, double gamma, double b, double delta,
                                             std::size_t d) {
  detail::require_positive(kappa, "kappa");
  detail::require_discount(gamma);
  detail::require_positive(b, "b");
  detail::require_positive(delta, "delta");
  if (d == 0) throw ConfigError("theory: d must be positive");
  const double h = 1.0 - gamma;
  const double dd = static_cast<double>(d);
  TheoryParams p;
  p.algo = Algorithm::kLspi;
  p.lambda = kappa * kappa * std::pow(h, 4) / (1024.0 * b * b);
  const double L = detail::log_factor(p.lambda);
  p.raw_n = 3.0 / h * std::log(4.0 * L * dd / (kappa * h));
  p.raw_K = 2.0 + 2.0 / h * std::log(3.0 / (kappa * h));
  p.raw_m = 4096.0 * dd * L / (kappa * kappa * std::pow(h, 6)) *
            std::log(8.0 * p.raw_K * dd * L / delta);
  p.n = detail::ceil_count(p.raw_n, 0);
  p.K = detail::ceil_count(p.raw_K, 1);
  p.m = detail::ceil_count(p.raw_m, 1);
  return p;
}

/// Realizable Politex (tau = 1).
inline TheoryParams politex_params_from_theorem(double kappa, double gamma, double b,
                                                double delta, std::size_t d,
                                                std::size_t action_count) {
  detail::require_positive(kappa, "kappa");
  detail::require_discount(gamma);
  detail::require_positive(b, "b");
  detail::require_positive(delta, "delta");
  if (d == 0) throw ConfigError("theory: d must be positive");
  if (action_count < 2) throw ConfigError("theory: Politex needs at least two actions");
  const double h = 1.0 - gamma;
  const double dd = static_cast<double>(d);
  const double logA = std::log(static_cast<double>(action_count));
  TheoryParams p;
  p.algo = Algorithm::kPolitex;
  p.lambda = kappa * kappa * h * h / (256.0 * b * b);
  const double L = detail::log_factor(p.lambda);
  p.raw_K = 32.0 * logA / (kappa * kappa * std::pow(h, 4));
  p.raw_n = 1.0 / h * std::log(32.0 * std::sqrt(dd) * L / (h * h * kappa));
  p.raw_m = 1024.0 * dd * L / (kappa * kappa * std::pow(h, 4)) *
            std::log(8.0 * p.raw_K * dd * L / delta);
  p.alpha = detail::alpha_for(gamma, action_count, p.raw_K);
  p.n = detail::ceil_count(p.raw_n, 0);
  p.K = detail::ceil_count(p.raw_K, 1);
  p.m = detail::ceil_count(p.raw_m, 1);
  return p;
}

/// Misspecified variants (|Q_pi - w^T phi| <= epsilon), tau = 1.
inline TheoryParams misspecified_params_from_theorem(double epsilon, double gamma, double b,
                                                     double delta, std::size_t d, Algorithm algo,
                                                     std::size_t action_count = 2) {
  detail::require_positive(epsilon, "epsilon");
  detail::require_discount(gamma);
  detail::require_positive(b, "b");
  detail::require_positive(delta, "delta");
  if (d == 0) throw ConfigError("theory: d must be positive");
  const double h = 1.0 - gamma;
  const double dd = static_cast<double>(d);
  TheoryParams p;
  p.algo = algo;
  p.lambda = epsilon * epsilon * dd / (b * b);
  const double L = detail::log_factor(p.lambda);
  p.raw_n = 1.0 / h * std::log(1.0 / (epsilon * h));
  if (algo == Algorithm::kLspi) {
    p.raw_K = 2.0 + 1.0 / h * std::log(1.0 / (epsilon * std::sqrt(dd)));
    p.predicted_bound = 74.0 * epsilon * std::sqrt(dd) / (h * h) *
                        (1.0 + std::log1p(b * b / (epsilon * epsilon * dd)));
  } else {
    if (action_count < 2) throw ConfigError("theory: Politex needs at least two actions");
    p.raw_K = 2.0 * std::log(static_cast<double>(action_count)) / (epsilon * epsilon * dd * h * h);
    p.alpha = detail::alpha_for(gamma, action_count, p.raw_K);
    p.predicted_bound = 42.0 * epsilon * std::sqrt(dd) / h *
                        (1.0 + std::log1p(b * b / (epsilon * epsilon * dd)));
  }
  p.raw_m = 1.0 / (epsilon * epsilon * h * h) * std::log(8.0 * p.raw_K * dd * L / delta);
  p.n = detail::ceil_count(p.raw_n, 0);
  p.K = detail::ceil_count(p.raw_K, 1);
  p.m = detail::ceil_count(p.raw_m, 1);
  return p;
}

/// Sub-optimality ceiling of misspecified LSPI at a given epsilon.
inline double lspi_misspecified_bound(double epsilon, double gamma, double b, std::size_t d) {
  const double h = 1.0 - gamma;
  const double dd = static_cast<double>(d);
  return 74.0 * epsilon * std::sqrt(dd) / (h * h) *
         (1.0 + std::log1p(b * b / (epsilon * epsilon * dd)));
}

}  // namespace confident
