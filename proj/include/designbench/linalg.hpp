#pragma once

// Dense least squares: OLS fits, hat-matrix entries and the leave-one-out
// coefficient identity
//
//   beta^(i) = beta - (Z'Z)^{-1} z_i e_i / (1 - P_ii)
//
// which turns n deletion refits into one factorization.

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "designbench/errors.hpp"

namespace designbench {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// A pivot of Z'Z below this fraction of its largest diagonal entry is singular.
inline constexpr double singular_tolerance = 1e-10;
// Leave-one-out quantities are undefined once 1 - P_ii drops to this level.
inline constexpr double leverage_tolerance = 1e-10;

/// Regression design Z = [1, X]. The first column is the intercept.
class DesignMatrix {
 public:
  DesignMatrix() = default;

  explicit DesignMatrix(Matrix z) : z_(std::move(z)) {
    if (z_.cols() < 1) throw invalid_design("design matrix needs an intercept column");
    for (Index i = 0; i < z_.rows(); ++i) {
      if (z_(i, 0) != 1.0) throw invalid_design("first design column must be identically 1");
    }
  }

  /// Prepends the intercept to an n x (p-1) covariate block.
  static DesignMatrix from_covariates(const Matrix& x) {
    Matrix z(x.rows(), x.cols() + 1);
    z.col(0).setOnes();
    z.rightCols(x.cols()) = x;
    return DesignMatrix(std::move(z));
  }

  static DesignMatrix intercept_only(Index n) { return DesignMatrix(Matrix::Ones(n, 1)); }

  Index rows() const { return z_.rows(); }
  Index cols() const { return z_.cols(); }
  const Matrix& values() const { return z_; }
  auto row(Index i) const { return z_.row(i); }

  DesignMatrix select_rows(std::span<const Index> idx) const {
    Matrix out(static_cast<Index>(idx.size()), z_.cols());
    for (std::size_t k = 0; k < idx.size(); ++k) out.row(static_cast<Index>(k)) = z_.row(idx[k]);
    return DesignMatrix(std::move(out));
  }

  DesignMatrix without_row(Index drop) const {
    Matrix out(z_.rows() - 1, z_.cols());
    for (Index i = 0, k = 0; i < z_.rows(); ++i) {
      if (i != drop) out.row(k++) = z_.row(i);
    }
    return DesignMatrix(std::move(out));
  }

 private:
  Matrix z_;
};

/// Pivoted LDL' factorization of a Gram matrix with a scale-aware singularity check.
class GramFactor {
 public:
  GramFactor() = default;

  explicit GramFactor(const Matrix& gram) : ldlt_(gram) {
    const double scale = gram.diagonal().cwiseAbs().maxCoeff();
    const Vector d = ldlt_.vectorD();
    if (ldlt_.info() != Eigen::Success || !(scale > 0.0) ||
        d.minCoeff() <= singular_tolerance * scale) {
      throw singular_gram("Z'Z is singular (smallest pivot " + std::to_string(d.minCoeff()) +
                          ", scale " + std::to_string(scale) + ")");
    }
  }

  template <typename Rhs>
  auto solve(const Rhs& rhs) const {
    return ldlt_.solve(rhs);
  }

  Index dim() const { return ldlt_.rows(); }

 private:
  Eigen::LDLT<Matrix> ldlt_;
};

/// OLS of y on Z with residuals, leverages and the solved design (Z'Z)^{-1} Z'.
/// Immutable once built; safe to read from several threads.
class OlsFit {
 public:
  OlsFit(DesignMatrix z, const Vector& y) : z_(std::move(z)) {
    const Index n = z_.rows();
    const Index p = z_.cols();
    if (y.size() != n) throw invalid_design("outcome length does not match design rows");
    if (n < p) {
      throw singular_gram("cannot fit " + std::to_string(p) + " coefficients from " +
                          std::to_string(n) + " rows");
    }
    const Matrix& zv = z_.values();
    gram_ = GramFactor(zv.transpose() * zv);
    solved_ = gram_.solve(zv.transpose());
    coefficients_ = solved_ * y;
    fitted_ = zv * coefficients_;
    residuals_ = y - fitted_;
    leverages_ = (zv.transpose().cwiseProduct(solved_)).colwise().sum().transpose();
  }

  Index size() const { return z_.rows(); }
  Index dim() const { return z_.cols(); }

  const DesignMatrix& design() const { return z_; }
  const GramFactor& gram() const { return gram_; }
  const Vector& coefficients() const { return coefficients_; }
  const Vector& fitted() const { return fitted_; }
  const Vector& residuals() const { return residuals_; }
  const Vector& leverages() const { return leverages_; }

  /// P_ij = z_i'(Z'Z)^{-1} z_j.
  double hat_entry(Index i, Index j) const { return z_.row(i).dot(solved_.col(j)); }

  /// e_i / (1 - P_ii).
  double loo_residual(Index i) const {
    const double room = 1.0 - leverages_(i);
    if (room <= leverage_tolerance) {
      throw leverage_one("unit " + std::to_string(i) + " has leverage 1; leave-one-out undefined");
    }
    return residuals_(i) / room;
  }

  /// Coefficients from the fit with row i deleted, via the identity (no refit).
  Vector loo_coefficients(Index i) const {
    if (size() < dim() + 1) throw singular_gram("leave-one-out needs n >= p + 1");
    return coefficients_ - solved_.col(i) * loo_residual(i);
  }

  /// z_i' beta^(i), the identity above premultiplied by z_i'.
  double loo_prediction(Index i) const { return fitted_(i) - leverages_(i) * loo_residual(i); }

 private:
  DesignMatrix z_;
  GramFactor gram_;
  Matrix solved_;
  Vector coefficients_;
  Vector fitted_;
  Vector residuals_;
  Vector leverages_;
};

inline OlsFit ols_fit(DesignMatrix z, const Vector& y) { return OlsFit(std::move(z), y); }

inline double hat_entry(const OlsFit& fit, Index i, Index j) { return fit.hat_entry(i, j); }
inline double loo_residual(const OlsFit& fit, Index i) { return fit.loo_residual(i); }
inline Vector loo_coefficients(const OlsFit& fit, Index i) { return fit.loo_coefficients(i); }

struct HatDiagnostics {
  double kappa = 0.0;
  Vector leverage_vector;
};

inline HatDiagnostics hat_diagnostics(const OlsFit& fit) {
  return {fit.leverages().maxCoeff(), fit.leverages()};
}

/// sum_{i != j} P_ij^2 a_i b_j for P = Z W Z' with W = (Z'Z)^{-1}.
/// Uses sum_{i,j} P_ij^2 a_i b_j = tr(W M_a W M_b), M_a = Z' diag(a) Z, then
/// removes the diagonal; O(n p^2) without forming P.
inline double offdiag_squared_hat_sum(const Matrix& z, const Matrix& gram_inverse, const Vector& leverages,
                                      const Vector& a, const Vector& b) {
  const Matrix wa = gram_inverse * (z.transpose() * (z.array().colwise() * a.array()).matrix());
  const Matrix wb = gram_inverse * (z.transpose() * (z.array().colwise() * b.array()).matrix());
  const double full = wa.cwiseProduct(wb.transpose()).sum();
  const double diag = (a.array() * b.array() * leverages.array().square()).sum();
  return full - diag;
}

/// Explicit n x n projection matrix. O(n^2 p); only for callers that need every P_ij.
inline Matrix projection_matrix(const DesignMatrix& z) {
  const Matrix& zv = z.values();
  const GramFactor gram(zv.transpose() * zv);
  const Matrix solved = gram.solve(zv.transpose());
  return zv * solved;
}

}  // namespace designbench
