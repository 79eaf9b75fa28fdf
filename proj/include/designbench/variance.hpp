#pragma once

// Heteroskedasticity-robust variance estimators for the two-arm estimators.
//
// Convention: sigma2 estimates Var(sqrt(n) (tau_hat - tau)), so the standard
// error of tau_hat is sqrt(sigma2 / n), NOT sqrt(sigma2).

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <string_view>
#include <utility>

#include <boost/math/distributions/normal.hpp>

#include "designbench/errors.hpp"
#include "designbench/estimators.hpp"
#include "designbench/linalg.hpp"
#include "designbench/population.hpp"

namespace designbench {

enum class VarianceMethod { hc0, hc2, hc3, dbhc3 };

inline constexpr std::array<VarianceMethod, 4> all_variance_methods = {VarianceMethod::hc0, VarianceMethod::hc2,
                                                                       VarianceMethod::hc3, VarianceMethod::dbhc3};

inline std::string_view to_string(VarianceMethod m) {
  switch (m) {
    case VarianceMethod::hc0: return "hc0";
    case VarianceMethod::hc2: return "hc2";
    case VarianceMethod::hc3: return "hc3";
    case VarianceMethod::dbhc3: return "dbhc3";
  }
  return "?";
}

inline VarianceMethod parse_variance_method(std::string_view name) {
  for (auto m : all_variance_methods) {
    if (to_string(m) == name) return m;
  }
  throw parse_error("unknown variance method '" + std::string(name) + "' (expected hc0, hc2, hc3 or dbhc3)");
}

struct VarianceReport {
  double sigma2 = 0.0;
  double se = 0.0;
  VarianceMethod method = VarianceMethod::hc0;
  // sigma2 came out negative and se was clamped to 0.
  bool clamped = false;
};

inline VarianceReport make_report(double sigma2, double n, VarianceMethod method) {
  VarianceReport r;
  r.sigma2 = sigma2;
  r.method = method;
  r.clamped = sigma2 < 0.0;
  r.se = std::sqrt(std::max(sigma2, 0.0) / n);
  return r;
}

namespace detail {

inline void require_two_per_arm(const ObservedSample& s) {
  if (s.n1() < 2 || s.n0() < 2) throw invalid_design("variance estimation needs at least two units per arm");
}

// n/(n1(n1-1)) sum_treated r_i^2 + n/(n0(n0-1)) sum_control r_i^2
inline double two_arm_sum_of_squares(const ObservedSample& s, const Vector& r) {
  double ss1 = 0.0, ss0 = 0.0;
  for (Index i = 0; i < s.n(); ++i) (s.t()[i] ? ss1 : ss0) += r(i) * r(i);
  const double n = static_cast<double>(s.n());
  const double n1 = static_cast<double>(s.n1());
  const double n0 = static_cast<double>(s.n0());
  return n / (n1 * (n1 - 1.0)) * ss1 + n / (n0 * (n0 - 1.0)) * ss0;
}

}  // namespace detail

inline VarianceReport hc0(const ObservedSample& s, const SampleFits& fits) {
  detail::require_two_per_arm(s);
  return make_report(detail::two_arm_sum_of_squares(s, fits.residuals()), static_cast<double>(s.n()),
                     VarianceMethod::hc0);
}

/// Residuals inflated by (1 - P_{t,ii})^{-1/2}.
inline VarianceReport hc2(const ObservedSample& s, const SampleFits& fits) {
  detail::require_two_per_arm(s);
  Vector r(s.n());
  for (Index i = 0; i < s.n(); ++i) {
    const double room = 1.0 - fits.group_leverages()(i);
    if (room <= leverage_tolerance) throw leverage_one("unit " + std::to_string(i) + " has own-arm leverage 1");
    r(i) = fits.residuals()(i) / std::sqrt(room);
  }
  return make_report(detail::two_arm_sum_of_squares(s, r), static_cast<double>(s.n()), VarianceMethod::hc2);
}

/// Leave-one-out (jackknife) residuals e_i / (1 - P_{t,ii}).
inline VarianceReport hc3(const ObservedSample& s, const SampleFits& fits) {
  detail::require_two_per_arm(s);
  return make_report(detail::two_arm_sum_of_squares(s, fits.loo_residuals()), static_cast<double>(s.n()),
                     VarianceMethod::hc3);
}

/// The three second-order sums added to HC3, built from full-sample P_ij and
/// own-arm leave-one-out residuals.
struct DbHc3Correction {
  double treated_pairs = 0.0;  // (n0^2 n / n1^4) sum_{i!=j} P_ij^2 T_i T_j e~_i e~_j
  double control_pairs = 0.0;  // (n1^2 n / n0^4) sum_{i!=j} P_ij^2 (1-T_i)(1-T_j) e~_i e~_j
  double cross_pairs = 0.0;    // -(2n / (n0 n1)) sum_{i!=j} P_ij^2 T_i (1-T_j) e~_i e~_j
  double total() const { return treated_pairs + control_pairs + cross_pairs; }
};

inline DbHc3Correction dbhc3_correction(const ObservedSample& s, const Vector& loo) {
  const Design& d = *s.design();
  Vector a = Vector::Zero(s.n()), b = Vector::Zero(s.n());
  for (Index i = 0; i < s.n(); ++i) (s.t()[i] ? a : b)(i) = loo(i);
  const auto& z = d.z().values();
  const double s11 = offdiag_squared_hat_sum(z, d.gram_inverse(), d.leverages(), a, a);
  const double s00 = offdiag_squared_hat_sum(z, d.gram_inverse(), d.leverages(), b, b);
  const double s10 = offdiag_squared_hat_sum(z, d.gram_inverse(), d.leverages(), a, b);
  const double n = static_cast<double>(s.n());
  const double n1 = static_cast<double>(s.n1());
  const double n0 = static_cast<double>(s.n0());
  DbHc3Correction c;
  c.treated_pairs = n0 * n0 * n / std::pow(n1, 4) * s11;
  c.control_pairs = n1 * n1 * n / std::pow(n0, 4) * s00;
  c.cross_pairs = -2.0 * n / (n0 * n1) * s10;
  return c;
}

/// HC3 plus the estimable part of the second-order variance. May be negative;
/// the report then clamps se to 0 and sets `clamped`.
inline VarianceReport dbhc3(const ObservedSample& s, const SampleFits& fits) {
  detail::require_two_per_arm(s);
  const Vector loo = fits.loo_residuals();
  const double base = detail::two_arm_sum_of_squares(s, loo);
  return make_report(base + dbhc3_correction(s, loo).total(), static_cast<double>(s.n()), VarianceMethod::dbhc3);
}

inline VarianceReport variance(VarianceMethod m, const ObservedSample& s, const SampleFits& fits) {
  switch (m) {
    case VarianceMethod::hc0: return hc0(s, fits);
    case VarianceMethod::hc2: return hc2(s, fits);
    case VarianceMethod::hc3: return hc3(s, fits);
    case VarianceMethod::dbhc3: return dbhc3(s, fits);
  }
  throw invalid_design("unknown variance method");
}

inline VarianceReport hc0(const ObservedSample& s) { return hc0(s, SampleFits(s)); }
inline VarianceReport hc2(const ObservedSample& s) { return hc2(s, SampleFits(s)); }
inline VarianceReport hc3(const ObservedSample& s) { return hc3(s, SampleFits(s)); }
inline VarianceReport dbhc3(const ObservedSample& s) { return dbhc3(s, SampleFits(s)); }

/// Standard normal quantile z_{(1+level)/2}.
inline double normal_critical_value(double level) {
  if (!(level > 0.0 && level < 1.0)) throw invalid_design("confidence level must lie in (0, 1)");
  return boost::math::quantile(boost::math::normal(), 0.5 * (1.0 + level));
}

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  bool contains(double x) const { return lo <= x && x <= hi; }
};

inline Interval confidence_interval(const PointEstimate& pe, const VarianceReport& vr, double level) {
  const double half = normal_critical_value(level) * vr.se;
  return {pe.tau_hat - half, pe.tau_hat + half};
}

}  // namespace designbench
