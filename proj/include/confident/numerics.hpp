#pragma once

#include "confident/errors.hpp"
#include "confident/types.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <cmath>
#include <span>
#include <stdexcept>

namespace confident {

/// Regularized Gram matrix A = lambda * I + sum_i phi_i phi_i^T together with
/// its Cholesky factor and log-determinant.
///
/// Values are immutable: rank_one_update() returns a fresh state, so a frozen
/// GramState can be read concurrently (uncertainty, ridge_solve) without
/// synchronization.
class GramState {
 public:
  /// A = lambda * I. Throws ConfigError for dim == 0 or lambda <= 0.
  GramState(std::size_t dim, double lambda) : lambda_(lambda) {
    if (dim == 0) throw ConfigError("gram: dimension must be positive");
    if (!(lambda > 0.0) || !std::isfinite(lambda)) {
      throw ConfigError("gram: lambda must be positive and finite");
    }
    const auto d = static_cast<Eigen::Index>(dim);
    matrix_ = lambda * Eigen::MatrixXd::Identity(d, d);
    factor_.compute(matrix_);
    log_det_ = static_cast<double>(dim) * std::log(lambda);
  }

  std::size_t dim() const noexcept { return static_cast<std::size_t>(matrix_.rows()); }
  double lambda() const noexcept { return lambda_; }
  const Eigen::MatrixXd& matrix() const noexcept { return matrix_; }
  const Eigen::LLT<Eigen::MatrixXd>& factor() const noexcept { return factor_; }
  double log_det() const noexcept { return log_det_; }

  /// phi^T A^{-1} phi.
  double uncertainty(const FeatureVector& phi) const {
    detail::require_dims(static_cast<std::size_t>(phi.size()), dim(), "uncertainty");
    const Eigen::VectorXd half = factor_.matrixL().solve(phi);
    return half.squaredNorm();
  }

  /// A + phi phi^T. The log-determinant advances by log(1 + phi^T A^{-1} phi)
  /// (matrix determinant lemma) and the factor is recomputed from scratch.
  GramState updated(const FeatureVector& phi) const {
    const double u = uncertainty(phi);
    GramState out = *this;
    out.matrix_.noalias() += phi * phi.transpose();
    out.factor_.compute(out.matrix_);
    out.log_det_ = log_det_ + std::log1p(u);
    return out;
  }

  /// A^{-1} rhs.
  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const {
    detail::require_dims(static_cast<std::size_t>(rhs.size()), dim(), "gram solve");
    return factor_.solve(rhs);
  }

 private:
  double lambda_;
  Eigen::MatrixXd matrix_;
  Eigen::LLT<Eigen::MatrixXd> factor_;
  double log_det_ = 0.0;
};

inline GramState gram_new(std::size_t dim, double lambda) { return GramState(dim, lambda); }

inline double uncertainty(const GramState& g, const FeatureVector& phi) {
  return g.uncertainty(phi);
}

inline GramState rank_one_update(const GramState& g, const FeatureVector& phi) {
  return g.updated(phi);
}

/// True when g.matrix() equals lambda * I + sum phi phi^T over `features`
/// to within a relative tolerance.
inline bool gram_matches(const GramState& g, std::span<const FeatureVector> features,
                         double rel_tol = 1e-10) {
  const auto d = static_cast<Eigen::Index>(g.dim());
  Eigen::MatrixXd rebuilt = g.lambda() * Eigen::MatrixXd::Identity(d, d);
  for (const auto& phi : features) {
    if (phi.size() != d) return false;
    rebuilt.noalias() += phi * phi.transpose();
  }
  return (rebuilt - g.matrix()).norm() <= rel_tol * (1.0 + rebuilt.norm());
}

/// Ridge regression w = (Phi^T Phi + lambda I)^{-1} Phi^T q, reusing the
/// factor cached in `g`. `g` must have been built from exactly `features`;
/// debug builds verify this by reconstruction.
inline WeightVector ridge_solve(const GramState& g, std::span<const FeatureVector> features,
                                std::span<const double> targets) {
  if (features.size() != targets.size()) {
    throw DimensionMismatch("ridge_solve: " + std::to_string(features.size()) +
                            " features but " + std::to_string(targets.size()) + " targets");
  }
  const auto d = static_cast<Eigen::Index>(g.dim());
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(d);
  for (std::size_t i = 0; i < features.size(); ++i) {
    detail::require_dims(static_cast<std::size_t>(features[i].size()), g.dim(), "ridge_solve");
    rhs.noalias() += targets[i] * features[i];
  }
#ifndef NDEBUG
  if (!gram_matches(g, features)) {
    throw std::logic_error("ridge_solve: Gram state does not match the feature list");
  }
#endif
  return g.solve(rhs);
}

}  // namespace confident
