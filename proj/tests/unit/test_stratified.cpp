#include <gtest/gtest.h>

#include <cmath>

#include "designbench.hpp"
#include "support/oracles.hpp"

using namespace designbench;

namespace {

ObservedSample stratum_sample(Rng& rng, Index n, Index n1, Index covs) {
  const auto pop = oracle::random_population(rng, n, n1, covs);
  return observe(pop, sample_assignment(n, n1, rng));
}

ObservedSample concatenate(const ObservedSample& a, const ObservedSample& b, std::vector<int>& labels) {
  const Index n = a.n() + b.n();
  Vector y(n);
  y << a.y(), b.y();
  Matrix x(n, a.design()->covariates().cols());
  x << a.design()->covariates(), b.design()->covariates();
  std::vector<std::uint8_t> t(a.t().values());
  t.insert(t.end(), b.t().values().begin(), b.t().values().end());
  labels.assign(static_cast<std::size_t>(a.n()), 7);
  labels.insert(labels.end(), static_cast<std::size_t>(b.n()), 3);
  return ObservedSample(y, Assignment(t), x, labels);
}

}  // namespace

TEST(Stratified, SingleStratumReducesToUnstratified) {
  Rng rng(1);
  const auto s = stratum_sample(rng, 50, 22, 3);
  const StratifiedSample one(std::vector<std::pair<int, ObservedSample>>{{1, s}});
  EXPECT_NEAR(stratified_cross_fitted(one).tau_hat, cross_fitted(s).tau_hat, 1e-14);
  for (auto m : {VarianceMethod::hc3, VarianceMethod::dbhc3}) {
    const auto a = stratified_variance(one, m);
    const auto b = variance(m, s, SampleFits(s));
    EXPECT_NEAR(a.se, b.se, 1e-14);
    EXPECT_NEAR(a.sigma2, b.sigma2, 1e-10 * std::abs(b.sigma2));
    EXPECT_NEAR(stratified_weighted_sigma2(one, m), b.sigma2, 1e-12 * std::abs(b.sigma2));
  }
}

TEST(Stratified, DuplicateStrataGiveTheSingleStratumEstimate) {
  Rng rng(2);
  const auto s = stratum_sample(rng, 40, 18, 2);
  const StratifiedSample two(std::vector<std::pair<int, ObservedSample>>{{1, s}, {2, s}});
  EXPECT_NEAR(stratified_cross_fitted(two).tau_hat, cross_fitted(s).tau_hat, 1e-12);
  for (const auto& st : two.strata()) EXPECT_DOUBLE_EQ(st.weight, 0.5);
}

TEST(Stratified, ZeroOutcomesGiveZero) {
  Rng rng(3);
  const Matrix x = oracle::uneven_covariates(rng, 30, 2);
  const ObservedSample s(Vector::Zero(30), sample_assignment(30, 12, rng), x);
  const StratifiedSample one(std::vector<std::pair<int, ObservedSample>>{{1, s}});
  EXPECT_EQ(stratified_cross_fitted(one).tau_hat, 0.0);
  EXPECT_NEAR(stratified_variance(one, VarianceMethod::dbhc3).sigma2, 0.0, 1e-20);
}

TEST(Stratified, MatchesDirectReferenceOnTwoStrata) {
  Rng rng(4);
  const auto a = stratum_sample(rng, 45, 20, 2);
  const auto b = stratum_sample(rng, 60, 24, 2);
  std::vector<int> labels;
  const auto joint = concatenate(a, b, labels);
  const StratifiedSample st(joint);
  ASSERT_EQ(st.strata().size(), 2u);
  EXPECT_EQ(st.strata()[0].label, 3);
  EXPECT_EQ(st.strata()[1].label, 7);
  const double ca = 45.0 / 105.0, cb = 60.0 / 105.0;
  EXPECT_NEAR(stratified_cross_fitted(st).tau_hat, ca * cross_fitted(a).tau_hat + cb * cross_fitted(b).tau_hat, 1e-10);
  for (auto m : {VarianceMethod::hc3, VarianceMethod::dbhc3}) {
    const double va = variance(m, a, SampleFits(a)).sigma2, vb = variance(m, b, SampleFits(b)).sigma2;
    EXPECT_NEAR(stratified_weighted_sigma2(st, m), ca * ca * va + cb * cb * vb, 1e-9);
    EXPECT_NEAR(stratified_variance(st, m).se, std::sqrt(ca * ca * va / 45.0 + cb * cb * vb / 60.0), 1e-9);
  }
}

TEST(Stratified, PermutingStrataChangesNothing) {
  Rng rng(5);
  const auto a = stratum_sample(rng, 35, 15, 2);
  const auto b = stratum_sample(rng, 50, 20, 2);
  const StratifiedSample ab(std::vector<std::pair<int, ObservedSample>>{{1, a}, {2, b}});
  const StratifiedSample ba(std::vector<std::pair<int, ObservedSample>>{{2, b}, {1, a}});
  EXPECT_NEAR(stratified_cross_fitted(ab).tau_hat, stratified_cross_fitted(ba).tau_hat, 1e-12);
  EXPECT_NEAR(stratified_variance(ab, VarianceMethod::dbhc3).sigma2,
              stratified_variance(ba, VarianceMethod::dbhc3).sigma2, 1e-10);
}

TEST(Stratified, ReplicatedUnitsKeepWeights) {
  Rng rng(6);
  const auto a = stratum_sample(rng, 20, 9, 1);
  const auto b = stratum_sample(rng, 30, 12, 1);
  std::vector<int> labels;
  const auto joint = concatenate(a, b, labels);
  const auto doubled = concatenate(joint, joint, labels);
  std::vector<int> twice = *joint.strata();
  twice.insert(twice.end(), joint.strata()->begin(), joint.strata()->end());
  const StratifiedSample s1(joint);
  const StratifiedSample s2(ObservedSample(doubled.y(), doubled.t(), doubled.design()->covariates(), twice));
  for (std::size_t k = 0; k < 2; ++k) EXPECT_DOUBLE_EQ(s1.strata()[k].weight, s2.strata()[k].weight);
}

TEST(Stratified, OnlyHc3FamilyAndAnnotatedErrors) {
  Rng rng(7);
  const auto a = stratum_sample(rng, 30, 12, 2);
  const StratifiedSample one(std::vector<std::pair<int, ObservedSample>>{{1, a}});
  EXPECT_THROW(stratified_variance(one, VarianceMethod::hc0), invalid_design);
  // a stratum whose treated arm has only p units
  const Matrix x = oracle::uneven_covariates(rng, 10, 2);
  const ObservedSample small(oracle::random_vector(rng, 10), sample_assignment(10, 3, rng), x);
  const StratifiedSample bad(std::vector<std::pair<int, ObservedSample>>{{1, a}, {9, small}});
  try {
    stratified_cross_fitted(bad);
    FAIL() << "expected leverage_one";
  } catch (const leverage_one& e) {
    EXPECT_NE(std::string(e.what()).find("stratum 9"), std::string::npos);
  }
}
