#pragma once

// Stratified experiments with a few large strata: each stratum is its own
// complete randomization, fitted independently, and combined with weights
// c_s = n_s / N.

#include <algorithm>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "designbench/errors.hpp"
#include "designbench/estimators.hpp"
#include "designbench/population.hpp"
#include "designbench/variance.hpp"

namespace designbench {

class StratifiedSample {
 public:
  struct Stratum {
    int label = 0;
    ObservedSample sample;
    double weight = 0.0;
  };

  /// Splits a labelled sample by stratum (ascending labels). Covariates are
  /// re-centered within each stratum.
  explicit StratifiedSample(const ObservedSample& s) {
    if (!s.strata()) throw invalid_design("sample carries no stratum labels");
    std::map<int, std::vector<Index>> groups;
    for (Index i = 0; i < s.n(); ++i) groups[(*s.strata())[static_cast<std::size_t>(i)]].push_back(i);
    const Matrix& x = s.design()->covariates();
    for (const auto& [label, idx] : groups) {
      const auto m = static_cast<Index>(idx.size());
      Vector y(m);
      Matrix xs(m, x.cols());
      std::vector<std::uint8_t> t(idx.size());
      for (Index k = 0; k < m; ++k) {
        const Index i = idx[static_cast<std::size_t>(k)];
        y(k) = s.y()(i);
        xs.row(k) = x.row(i);
        t[static_cast<std::size_t>(k)] = s.t()[i] ? 1 : 0;
      }
      try {
        strata_.push_back({label, ObservedSample(std::move(y), Assignment(std::move(t)), xs),
                           static_cast<double>(m) / static_cast<double>(s.n())});
      } catch (const error& e) {
        throw invalid_design("stratum " + std::to_string(label) + ": " + e.what());
      }
    }
    total_ = s.n();
  }

  /// Builds from independently drawn stratum samples.
  explicit StratifiedSample(std::vector<std::pair<int, ObservedSample>> strata) {
    for (auto& [label, sample] : strata) total_ += sample.n();
    for (auto& [label, sample] : strata) {
      const double w = static_cast<double>(sample.n()) / static_cast<double>(total_);
      strata_.push_back({label, std::move(sample), w});
    }
  }

  const std::vector<Stratum>& strata() const { return strata_; }
  Index total() const { return total_; }

 private:
  std::vector<Stratum> strata_;
  Index total_ = 0;
};

namespace detail {

template <typename F>
auto per_stratum(const StratifiedSample::Stratum& st, F&& f) {
  try {
    return f(st.sample);
  } catch (const leverage_one& e) {
    throw leverage_one("stratum " + std::to_string(st.label) + ": " + e.what());
  } catch (const singular_gram& e) {
    throw singular_gram("stratum " + std::to_string(st.label) + ": " + e.what());
  }
}

}  // namespace detail

inline PointEstimate stratified_cross_fitted(const StratifiedSample& s) {
  PointEstimate out{0.0, EstimatorId::cf, 0.0, 0.0};
  for (const auto& st : s.strata()) {
    const auto pe = detail::per_stratum(st, [](const ObservedSample& x) { return cross_fitted(x); });
    out.mu1_hat += st.weight * pe.mu1_hat;
    out.mu0_hat += st.weight * pe.mu0_hat;
  }
  out.tau_hat = out.mu1_hat - out.mu0_hat;
  return out;
}

inline void require_stratified_method(VarianceMethod method) {
  if (method != VarianceMethod::hc3 && method != VarianceMethod::dbhc3) {
    throw invalid_design("stratified variance supports hc3 and dbhc3 only");
  }
}

/// Literal combination sum_s c_s^2 sigma2_s of the per-stratum estimators.
inline double stratified_weighted_sigma2(const StratifiedSample& s, VarianceMethod method) {
  require_stratified_method(method);
  double acc = 0.0;
  for (const auto& st : s.strata()) {
    const auto vr = detail::per_stratum(st, [method](const ObservedSample& x) { return variance(method, x, SampleFits(x)); });
    acc += st.weight * st.weight * vr.sigma2;
  }
  return acc;
}

/// Reported se = sqrt(sum_s c_s^2 sigma2_s / n_s); sigma2 = N se^2 keeps the
/// se = sqrt(sigma2 / N) convention, so one stratum reproduces the unstratified report.
inline VarianceReport stratified_variance(const StratifiedSample& s, VarianceMethod method) {
  require_stratified_method(method);
  double var = 0.0;
  for (const auto& st : s.strata()) {
    const auto vr = detail::per_stratum(st, [method](const ObservedSample& x) { return variance(method, x, SampleFits(x)); });
    var += st.weight * st.weight * vr.sigma2 / static_cast<double>(st.sample.n());
  }
  const double n = static_cast<double>(s.total());
  return make_report(var * n, n, method);
}

}  // namespace designbench
