#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/QR>

#include "designbench/estimators.hpp"
#include "designbench/linalg.hpp"
#include "designbench/moments.hpp"
#include "designbench/population.hpp"
#include "designbench/random.hpp"

namespace designbench {

enum class VerifySuite { moments, unbiasedness, loo, projections, all };

inline VerifySuite parse_verify_suite(std::string_view s) {
  if (s == "moments") return VerifySuite::moments;
  if (s == "unbiasedness") return VerifySuite::unbiasedness;
  if (s == "loo") return VerifySuite::loo;
  if (s == "projections") return VerifySuite::projections;
  if (s == "all") return VerifySuite::all;
  throw parse_error("unknown verify suite '" + std::string(s) +
                    "' (expected moments, unbiasedness, loo, projections or all)");
}

struct VerifyCheck {
  std::string suite;
  std::string name;
  bool passed = false;
  std::string detail;
};

namespace fixtures {

/// Columns y1, y0, x1, x2. Eight units, four treated, intercept plus two covariates.
inline constexpr double unbiasedness_8_4_3[8][4] = {
    {1.234, -0.721, -1.338, -1.076}, {0.981, -1.019, -0.397, -1.962}, {0.894, -0.786, -0.941, -1.935},
    {1.778, 0.58, -0.53, 0.656},     {3.986, 1.812, 0.873, 0.172},    {3.523, 2.206, -0.591, 0.349},
    {2.898, 2.002, -0.12, -0.961},   {4.499, 3.351, 0.034, 1.575}};

/// Columns y1, y0, x1. Six units, three treated, intercept plus one covariate.
inline constexpr double unbiasedness_6_3_2[6][3] = {{3.238, 1.24, -0.668}, {2.668, 1.651, -1.068},
                                                    {1.075, 0.084, 0.615}, {4.122, 2.937, 0.627},
                                                    {1.394, 0.988, -0.372}, {3.498, 0.563, 0.808}};

template <std::size_t N, std::size_t C>
FinitePopulation population_from(const double (&rows)[N][C], Index n1) {
  const auto n = static_cast<Index>(N);
  Vector y1(n), y0(n);
  Matrix x(n, static_cast<Index>(C) - 2);
  for (Index i = 0; i < n; ++i) {
    y1(i) = rows[i][0];
    y0(i) = rows[i][1];
    for (Index k = 0; k + 2 < static_cast<Index>(C); ++k) x(i, k) = rows[i][k + 2];
  }
  return FinitePopulation(std::move(y1), std::move(y0), x, n1);
}

}  // namespace fixtures

namespace detail {

inline std::string format_error(double e) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", e);
  return buf;
}

inline Matrix random_covariates(Rng& rng, Index n, Index k) {
  Matrix x(n, k);
  for (Index j = 0; j < k; ++j) {
    for (Index i = 0; i < n; ++i) x(i, j) = rng.student_t(5);
  }
  return x;
}

}  // namespace detail

/// Closed-form moments against exact enumeration over every assignment.
inline std::vector<VerifyCheck> verify_moments(
    const std::vector<std::pair<std::int64_t, std::int64_t>>& sizes = {{4, 2}, {5, 2}, {6, 3}, {7, 3}}) {
  std::vector<VerifyCheck> out;
  for (auto [n, n1] : sizes) {
    int checked = 0;
    std::string bad;
    for (const auto& pat : closed_form_patterns()) {
      if (static_cast<std::int64_t>(pat.size()) > n) continue;
      const MomentSpec spec{pat, n, n1};
      ++checked;
      if (closed_form_moment(spec) != enumerated_moment(spec)) bad += (bad.empty() ? "" : " ") + pattern_string(pat);
    }
    out.push_back({"moments", "(n=" + std::to_string(n) + ", n1=" + std::to_string(n1) + ")", bad.empty(),
                   bad.empty() ? std::to_string(checked) + " patterns exact" : "mismatch at " + bad});
  }
  return out;
}

/// Enumeration mean of an estimator minus tau, over every assignment.
inline double enumeration_bias(const FinitePopulation& pop, EstimatorId id) {
  long double acc = 0.0L;
  std::uint64_t count = 0;
  const DesignPtr plain = Design::intercept_only(pop.n());
  for_each_assignment(pop.n(), pop.n1(), [&](const Assignment& t) {
    const ObservedSample s = observe(pop, t);
    if (id == EstimatorId::dif) {
      acc += diff_in_means(ObservedSample(s.y(), t, plain)).tau_hat;
    } else {
      acc += estimate(id, s, SampleFits(s)).tau_hat;
    }
    ++count;
  });
  return static_cast<double>(acc / static_cast<long double>(count)) - pop.tau();
}

inline std::vector<VerifyCheck> verify_unbiasedness(double tol = 1e-10) {
  std::vector<VerifyCheck> out;
  const std::pair<std::string, FinitePopulation> cases[] = {
      {"(n=6, n1=3, p=2)", fixtures::population_from(fixtures::unbiasedness_6_3_2, 3)},
      {"(n=8, n1=4, p=3)", fixtures::population_from(fixtures::unbiasedness_8_4_3, 4)}};
  for (const auto& [label, pop] : cases) {
    for (auto id : {EstimatorId::unbiased, EstimatorId::dif}) {
      const double bias = enumeration_bias(pop, id);
      const bool ok = std::abs(bias) <= tol * std::max(1.0, std::abs(pop.tau()));
      out.push_back({"unbiasedness", std::string(to_string(id)) + " " + label, ok,
                     "enumeration mean - tau = " + detail::format_error(bias)});
    }
  }
  return out;
}

/// Leave-one-out coefficients against deletion refits on random instances.
inline std::vector<VerifyCheck> verify_loo(int instances = 100, std::uint64_t seed = 7, double tol = 1e-9) {
  double worst = 0.0;
  int failed = 0;
  for (int r = 0; r < instances; ++r) {
    Rng rng = Rng::derive(seed, {11, static_cast<std::uint64_t>(r)});
    const auto p = static_cast<Index>(1 + rng.below(8));
    const auto n = static_cast<Index>(p + 2 + static_cast<Index>(rng.below(static_cast<std::uint64_t>(99 - p))));
    const Matrix x = detail::random_covariates(rng, n, p - 1);
    Vector y(n);
    for (Index i = 0; i < n; ++i) y(i) = rng.normal() * 2.0 + 1.0;
    const OlsFit fit(DesignMatrix::from_covariates(x), y);
    double err = 0.0;
    for (Index i = 0; i < n; ++i) {
      if (1.0 - fit.leverages()(i) <= 1e-8) continue;
      Matrix zd(n - 1, p);
      Vector yd(n - 1);
      for (Index a = 0, k = 0; a < n; ++a) {
        if (a == i) continue;
        zd.row(k) = fit.design().row(a);
        yd(k++) = y(a);
      }
      const Vector ref = zd.colPivHouseholderQr().solve(yd);
      err = std::max(err, (fit.loo_coefficients(i) - ref).cwiseAbs().maxCoeff() / std::max(1.0, ref.cwiseAbs().maxCoeff()));
    }
    worst = std::max(worst, err);
    if (!(err <= tol)) ++failed;
  }
  return {{"loo", std::to_string(instances) + " random instances", failed == 0,
           "max relative error " + detail::format_error(worst)}};
}

/// Trace, row-sum and idempotence identities of the hat matrix.
inline std::vector<VerifyCheck> verify_projections(int instances = 50, std::uint64_t seed = 7, double tol = 1e-8) {
  double worst = 0.0;
  int failed = 0;
  for (int r = 0; r < instances; ++r) {
    Rng rng = Rng::derive(seed, {12, static_cast<std::uint64_t>(r)});
    const auto p = static_cast<Index>(1 + rng.below(30));
    const auto n = static_cast<Index>(p + 1 + static_cast<Index>(rng.below(static_cast<std::uint64_t>(200 - p))));
    const Matrix x = detail::random_covariates(rng, n, p - 1);
    const OlsFit fit(DesignMatrix::from_covariates(x), Vector::Zero(n));
    double err = std::abs(fit.leverages().sum() - static_cast<double>(p));
    for (Index i = 0; i < n; ++i) {
      double row = 0.0, sq = 0.0;
      for (Index j = 0; j < n; ++j) {
        const double h = fit.hat_entry(i, j);
        row += h;
        sq += h * h;
      }
      err = std::max({err, std::abs(row - 1.0), std::abs(sq - fit.leverages()(i))});
    }
    worst = std::max(worst, err);
    if (!(err <= tol)) ++failed;
  }
  return {{"projections", std::to_string(instances) + " random instances", failed == 0,
           "max identity error " + detail::format_error(worst)}};
}

inline std::vector<VerifyCheck> run_verify(VerifySuite suite) {
  std::vector<VerifyCheck> out;
  auto add = [&out](std::vector<VerifyCheck> v) { out.insert(out.end(), v.begin(), v.end()); };
  const bool all = suite == VerifySuite::all;
  if (all || suite == VerifySuite::moments) add(verify_moments());
  if (all || suite == VerifySuite::unbiasedness) add(verify_unbiasedness());
  if (all || suite == VerifySuite::loo) add(verify_loo());
  if (all || suite == VerifySuite::projections) add(verify_projections());
  return out;
}

}  // namespace designbench
