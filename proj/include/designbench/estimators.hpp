#pragma once

// Average-treatment-effect point estimators: difference in means, regression
// adjustment, the leverage-based bias correction, the leave-one-out cross-fitted
// estimator and the exactly unbiased adjustment.
//
// Adjusted and cross-fitted estimators use the inverse-probability form
//
//   mu_1 = n^{-1} sum_i { (T_i/pi) Y_i - (T_i/pi - 1) z_i' b_1 }
//
// with pi = n1/n taken from the realized design. The cross-fitted version
// replaces b_1 by the leave-one-out coefficients for treated i.

#include <array>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "designbench/errors.hpp"
#include "designbench/linalg.hpp"
#include "designbench/population.hpp"

namespace designbench {

enum class EstimatorId { dif, adj, bc, cf, unbiased };

inline constexpr std::array<EstimatorId, 5> all_estimators = {EstimatorId::dif, EstimatorId::adj, EstimatorId::bc,
                                                              EstimatorId::cf, EstimatorId::unbiased};

inline std::string_view to_string(EstimatorId id) {
  switch (id) {
    case EstimatorId::dif: return "dif";
    case EstimatorId::adj: return "adj";
    case EstimatorId::bc: return "bc";
    case EstimatorId::cf: return "cf";
    case EstimatorId::unbiased: return "unbiased";
  }
  return "?";
}

inline EstimatorId parse_estimator(std::string_view name) {
  for (auto id : all_estimators) {
    if (to_string(id) == name) return id;
  }
  throw parse_error("unknown estimator '" + std::string(name) + "' (expected dif, adj, bc, cf or unbiased)");
}

struct PointEstimate {
  double tau_hat = 0.0;
  EstimatorId estimator_id = EstimatorId::dif;
  double mu1_hat = 0.0;
  double mu0_hat = 0.0;
};

/// Within-arm OLS fits for one realized assignment, laid back out over all n units.
class SampleFits {
 public:
  explicit SampleFits(const ObservedSample& s) : units_{s.t().units(0), s.t().units(1)} {
    const Index n = s.n();
    residuals_.resize(n);
    group_leverages_.resize(n);
    fitted_.resize(n);
    for (int arm : {0, 1}) {
      const auto& idx = units_[static_cast<std::size_t>(arm)];
      Vector y(static_cast<Index>(idx.size()));
      for (std::size_t k = 0; k < idx.size(); ++k) y(static_cast<Index>(k)) = s.y()(idx[k]);
      try {
        fits_[static_cast<std::size_t>(arm)].emplace_back(s.design()->z().select_rows(idx), y);
      } catch (const singular_gram& e) {
        throw singular_gram(std::string(arm ? "treated" : "control") + " arm (n_t=" + std::to_string(idx.size()) +
                            ", p=" + std::to_string(s.p()) + "): " + e.what());
      }
      const OlsFit& f = fit(arm);
      for (std::size_t k = 0; k < idx.size(); ++k) {
        residuals_(idx[k]) = f.residuals()(static_cast<Index>(k));
        group_leverages_(idx[k]) = f.leverages()(static_cast<Index>(k));
        fitted_(idx[k]) = f.fitted()(static_cast<Index>(k));
      }
    }
  }

  const OlsFit& fit(int arm) const { return fits_[static_cast<std::size_t>(arm)].front(); }
  const std::vector<Index>& units(int arm) const { return units_[static_cast<std::size_t>(arm)]; }

  /// Own-arm OLS residual e_i.
  const Vector& residuals() const { return residuals_; }
  /// Own-arm leverage P_{t,ii}.
  const Vector& group_leverages() const { return group_leverages_; }
  /// Own-arm fitted value z_i' b_{T_i}.
  const Vector& fitted() const { return fitted_; }

  /// e_i / (1 - P_{t,ii}) for every unit; throws leverage_one if any is undefined.
  Vector loo_residuals() const {
    Vector out(residuals_.size());
    for (Index i = 0; i < out.size(); ++i) {
      const double room = 1.0 - group_leverages_(i);
      if (room <= leverage_tolerance) {
        throw leverage_one("unit " + std::to_string(i) + " has own-arm leverage 1 (arm too small for p)");
      }
      out(i) = residuals_(i) / room;
    }
    return out;
  }

 private:
  std::array<std::vector<Index>, 2> units_;
  // vector so OlsFit needs no default state
  std::array<std::vector<OlsFit>, 2> fits_;
  Vector residuals_;
  Vector group_leverages_;
  Vector fitted_;
};

inline PointEstimate diff_in_means(const ObservedSample& s) {
  if (s.n1() < 1 || s.n0() < 1) throw invalid_design("difference in means needs both arms non-empty");
  double sum1 = 0.0, sum0 = 0.0;
  for (Index i = 0; i < s.n(); ++i) (s.t()[i] ? sum1 : sum0) += s.y()(i);
  const double mu1 = sum1 / static_cast<double>(s.n1());
  const double mu0 = sum0 / static_cast<double>(s.n0());
  return {mu1 - mu0, EstimatorId::dif, mu1, mu0};
}

namespace detail {

// n^{-1} sum_i { w_i Y_i - (w_i - 1) pred_i } with w_i = T_i/pi (arm 1) or (1-T_i)/(1-pi) (arm 0).
inline double ipw_adjusted_mean(const ObservedSample& s, int arm, const Vector& pred) {
  const double pi = s.pi();
  const double share = arm ? pi : 1.0 - pi;
  double acc = 0.0;
  for (Index i = 0; i < s.n(); ++i) {
    const double w = (s.t()[i] == (arm != 0)) ? 1.0 / share : 0.0;
    acc += w * s.y()(i) - (w - 1.0) * pred(i);
  }
  return acc / static_cast<double>(s.n());
}

inline Vector arm_predictions(const ObservedSample& s, const SampleFits& fits, int arm) {
  return s.design()->z().values() * fits.fit(arm).coefficients();
}

}  // namespace detail

inline PointEstimate adjusted(const ObservedSample& s, const SampleFits& fits) {
  const double mu1 = detail::ipw_adjusted_mean(s, 1, detail::arm_predictions(s, fits, 1));
  const double mu0 = detail::ipw_adjusted_mean(s, 0, detail::arm_predictions(s, fits, 0));
  return {mu1 - mu0, EstimatorId::adj, mu1, mu0};
}

inline PointEstimate adjusted(const ObservedSample& s) { return adjusted(s, SampleFits(s)); }

/// Leverage correction with full-sample P_ii (Z over all n units).
inline PointEstimate bias_corrected(const ObservedSample& s, const SampleFits& fits) {
  const PointEstimate adj = adjusted(s, fits);
  const Vector& lev = s.design()->leverages();
  const Vector& e = fits.residuals();
  double d1 = 0.0, d0 = 0.0;
  for (Index i = 0; i < s.n(); ++i) (s.t()[i] ? d1 : d0) += lev(i) * e(i);
  const double n1 = static_cast<double>(s.n1());
  const double n0 = static_cast<double>(s.n0());
  d1 /= n1;
  d0 /= n0;
  const double mu1 = adj.mu1_hat + (n0 / n1) * d1;
  const double mu0 = adj.mu0_hat + (n1 / n0) * d0;
  return {mu1 - mu0, EstimatorId::bc, mu1, mu0};
}

inline PointEstimate bias_corrected(const ObservedSample& s) { return bias_corrected(s, SampleFits(s)); }

/// Cross-fitted estimator. Own-arm predictions use the leave-one-out identity
/// z_i' b_t^(i) = z_i' b_t - P_{t,ii} e~_i; other-arm predictions use the full arm fit.
inline PointEstimate cross_fitted(const ObservedSample& s, const SampleFits& fits) {
  for (int arm : {0, 1}) {
    if (static_cast<Index>(fits.units(arm).size()) < s.p() + 1) {
      throw leverage_one(std::string(arm ? "treated" : "control") + " arm has n_t=" +
                         std::to_string(fits.units(arm).size()) + " <= p=" + std::to_string(s.p()) +
                         "; cross-fitting needs n_t >= p + 1");
    }
  }
  const Vector loo = fits.loo_residuals();
  std::array<double, 2> mu{};
  for (int arm : {0, 1}) {
    Vector pred = detail::arm_predictions(s, fits, arm);
    for (Index i : fits.units(arm)) pred(i) -= fits.group_leverages()(i) * loo(i);
    mu[static_cast<std::size_t>(arm)] = detail::ipw_adjusted_mean(s, arm, pred);
  }
  return {mu[1] - mu[0], EstimatorId::cf, mu[1], mu[0]};
}

inline PointEstimate cross_fitted(const ObservedSample& s) { return cross_fitted(s, SampleFits(s)); }

/// Regression adjustment minus the two exactly mean-zero-making corrections per arm,
/// with Sigma = Z'Z/n and Sigma_t the arm second-moment matrix.
inline PointEstimate unbiased(const ObservedSample& s, const SampleFits& fits) {
  const PointEstimate adj = adjusted(s, fits);
  const Design& d = *s.design();
  const Matrix& z = d.z().values();
  const double n = static_cast<double>(s.n());
  const double n1 = static_cast<double>(s.n1());
  const double n0 = static_cast<double>(s.n0());
  const double pi = n1 / n;

  // z_i' Sigma^{-1} z_j = n P_ij; column sums of P give s' Sigma^{-1} z_j / n.
  const Vector& lev = d.leverages();
  const Vector hat_colsum = (z.colwise().sum() * d.solved()).transpose();

  Vector g1 = Vector::Zero(d.p()), g0 = Vector::Zero(d.p());
  Vector m1 = Vector::Zero(d.p()), m0 = Vector::Zero(d.p());
  double diag1 = 0.0, diag0 = 0.0, off1 = 0.0, off0 = 0.0;
  for (Index i = 0; i < s.n(); ++i) {
    const bool treated = s.t()[i];
    const double yi = s.y()(i);
    g1 += ((treated ? 1.0 / pi : 0.0) - 1.0) * z.row(i).transpose();
    g0 += ((treated ? 0.0 : 1.0 / (1.0 - pi)) - 1.0) * z.row(i).transpose();
    if (treated) {
      m1 += yi * z.row(i).transpose();
      diag1 += n * lev(i) * yi;
      off1 += n * (hat_colsum(i) - lev(i)) * yi;
    } else {
      m0 += yi * z.row(i).transpose();
      diag0 += n * lev(i) * yi;
      off0 += n * (hat_colsum(i) - lev(i)) * yi;
    }
  }
  m1 /= n1;
  m0 /= n0;
  const Matrix& w = d.gram_inverse();  // Sigma^{-1} = n W
  const Vector full1 = n * (w * m1);
  const Vector full0 = n * (w * m0);

  const double b1_first = -g1.dot(fits.fit(1).coefficients() - full1) / n;
  const double b1_second = -(n0 / (n1 * n1 * n)) * diag1 + (n0 / (n1 * n1 * (n - 1.0) * n)) * off1;
  const double b0_first = g0.dot(fits.fit(0).coefficients() - full0) / n;
  const double b0_second = (n1 / (n0 * n0 * n)) * diag0 - (n1 / (n0 * n0 * (n - 1.0) * n)) * off0;

  const double mu1 = adj.mu1_hat - b1_first - b1_second;
  const double mu0 = adj.mu0_hat + b0_first + b0_second;
  return {mu1 - mu0, EstimatorId::unbiased, mu1, mu0};
}

inline PointEstimate unbiased(const ObservedSample& s) { return unbiased(s, SampleFits(s)); }

/// Dispatch by id; dif ignores the fits.
inline PointEstimate estimate(EstimatorId id, const ObservedSample& s, const SampleFits& fits) {
  switch (id) {
    case EstimatorId::dif: return diff_in_means(s);
    case EstimatorId::adj: return adjusted(s, fits);
    case EstimatorId::bc: return bias_corrected(s, fits);
    case EstimatorId::cf: return cross_fitted(s, fits);
    case EstimatorId::unbiased: return unbiased(s, fits);
  }
  throw invalid_design("unknown estimator");
}

}  // namespace designbench
