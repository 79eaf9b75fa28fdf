#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "designbench.hpp"
#include "designbench/report.hpp"
#include "support/oracles.hpp"

using namespace designbench;

namespace {

SimConfig small_config() {
  SimConfig c;
  c.n = 60;
  c.pi1 = 0.4;
  c.p_grid = {2, 5};
  c.df = 3;
  c.reps = 40;
  c.master_seed = 99;
  return c;
}

}  // namespace

TEST(SimConfig, Validation) {
  SimConfig c = small_config();
  EXPECT_NO_THROW(c.validate());
  c.pi1 = 0.33;
  EXPECT_THROW(c.validate(), invalid_design);
  c = small_config();
  c.p_grid = {23};  // min(n1, n0) - 1 = 23
  EXPECT_THROW(c.validate(), invalid_design);
  c.p_grid = {22};
  EXPECT_NO_THROW(c.validate());
  c = small_config();
  c.reps = 0;
  EXPECT_THROW(c.validate(), invalid_design);
}

TEST(Dgp, CovariateBankHasPrefixProperty) {
  const SimConfig c = small_config();
  const DgpBank wide(c, 8), narrow(c, 3);
  EXPECT_EQ(wide.covariates.leftCols(3), narrow.covariates);
  EXPECT_EQ(wide.coefficients.head(3), narrow.coefficients);
  EXPECT_EQ(wide.normal_errors, narrow.normal_errors);
  const auto a = build_dgp(c, 3);
  const auto b = build_population(c, wide, 3);
  EXPECT_EQ(a.y1(), b.y1());
  EXPECT_EQ(a.y0(), b.y0());
}

TEST(Dgp, TDrawsHaveHeavyTailsAndCenteredScale) {
  SimConfig c = small_config();
  c.n = 20000;
  c.df = 4;
  const DgpBank bank(c, 1);
  const Vector x = bank.covariates.col(0);
  // Var of t(4) is 2
  const double mean = x.mean();
  const double var = (x.array() - mean).square().mean();
  EXPECT_NEAR(mean, 0.0, 0.05);
  EXPECT_NEAR(var, 2.0, 0.25);
}

TEST(Dgp, WorstCaseErrorsAreFeasibleAndTwoToOne) {
  SimConfig c = small_config();
  const auto pop = build_dgp(c, 4);
  const Matrix x = DgpBank(c, 4).covariates;
  const Vector eps = worst_case_errors(x);
  EXPECT_NEAR(eps.squaredNorm() / static_cast<double>(c.n), 1.0, 1e-12);
  EXPECT_LT((oracle::with_intercept(x).transpose() * eps).cwiseAbs().maxCoeff(), 1e-9);
  const Vector signal = x * DgpBank(c, 4).coefficients;
  EXPECT_LT((pop.y0() - signal - eps).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((pop.y1() - signal - 2.0 * eps).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Dgp, WorstCaseBeatsRandomFeasibleDirections) {
  Rng rng(5);
  const Matrix x = oracle::uneven_covariates(rng, 40, 3);
  const Index n1 = 12;
  const double best = worst_case_objective(x, n1, worst_case_errors(x));
  const Matrix z = oracle::with_intercept(x);
  const Matrix proj = Matrix::Identity(40, 40) - oracle::hat(z);
  for (int k = 0; k < 500; ++k) {
    Vector v = proj * oracle::random_vector(rng, 40);
    v *= std::sqrt(40.0) / v.norm();
    EXPECT_LE(worst_case_objective(x, n1, v), best * (1.0 + 1e-12));
  }
}

TEST(Dgp, ConstantLeveragesAreDegenerate) {
  Matrix x(4, 1);
  x << -1, 1, -1, 1;
  EXPECT_THROW(worst_case_errors(x), degenerate_objective);
}

TEST(Dgp, NormalErrorsAreShared) {
  SimConfig c = small_config();
  c.error_kind = ErrorKind::normal;
  const auto pop = build_dgp(c, 2);
  EXPECT_EQ(pop.y1(), pop.y0());
}

TEST(MonteCarlo, ZeroErrorsGiveExactEstimatesAndFullCoverage) {
  SimConfig c = small_config();
  c.error_kind = ErrorKind::zero;
  c.estimators = {EstimatorId::adj, EstimatorId::bc, EstimatorId::cf};
  const auto r = run_monte_carlo(c);
  for (const auto& row : r.rows) {
    EXPECT_NEAR(row.bias, 0.0, 1e-10);
    EXPECT_NEAR(row.sd, 0.0, 1e-10);
    EXPECT_FALSE(row.relative_bias.has_value());
    ASSERT_TRUE(row.coverage.has_value());
    EXPECT_EQ(*row.coverage, 1.0);
    EXPECT_EQ(row.failures, 0);
  }
}

TEST(MonteCarlo, RowsCoverEveryCombinationAndRatiosAreRelativeToCf) {
  SimConfig c = small_config();
  c.estimators = {EstimatorId::dif, EstimatorId::adj, EstimatorId::cf, EstimatorId::unbiased};
  c.se_methods = {VarianceMethod::hc0, VarianceMethod::hc3};
  const auto r = run_monte_carlo(c);
  ASSERT_EQ(r.rows.size(), 2u * 4u * 2u);
  ASSERT_EQ(r.populations.size(), 2u);
  for (const auto& row : r.rows) {
    EXPECT_EQ(row.reps, 40);
    ASSERT_TRUE(row.sd_ratio_vs_cf.has_value());
    if (row.estimator == EstimatorId::cf) EXPECT_DOUBLE_EQ(*row.sd_ratio_vs_cf, 1.0);
    ASSERT_TRUE(row.relative_bias.has_value());
    const double sl = std::sqrt(r.populations[row.p == 2 ? 0 : 1].sigma_L2);
    EXPECT_NEAR(*row.relative_bias, row.bias / sl, 1e-15);
    EXPECT_GE(*row.coverage, 0.0);
    EXPECT_LE(*row.coverage, 1.0);
  }
}

TEST(MonteCarlo, ReplicationsMatchDirectRecomputation) {
  SimConfig c = small_config();
  c.p_grid = {3};
  c.reps = 25;
  c.estimators = {EstimatorId::cf};
  c.se_methods = {VarianceMethod::hc3};
  const auto r = run_monte_carlo(c);
  const auto pop = build_dgp(c, 3);
  double sum = 0.0;
  int hits = 0;
  const double z = normal_critical_value(0.95);
  for (Index k = 0; k < c.reps; ++k) {
    Rng rng = Rng::derive(c.master_seed, {4, 3, static_cast<std::uint64_t>(k)});
    const auto s = observe(pop, sample_assignment(c.n, c.n1(), rng));
    const double est = cross_fitted(s).tau_hat;
    sum += est - pop.tau();
    hits += std::abs(est - pop.tau()) <= z * hc3(s).se ? 1 : 0;
  }
  EXPECT_NEAR(r.rows[0].bias, sum / 25.0, 1e-12);
  EXPECT_DOUBLE_EQ(*r.rows[0].coverage, hits / 25.0);
}

TEST(MonteCarlo, FailuresAreCountedNotFatal) {
  SimConfig c = small_config();
  c.n = 20;
  c.pi1 = 0.25;  // n1 = 5
  c.p_grid = {3};
  c.reps = 30;
  c.estimators = {EstimatorId::adj, EstimatorId::cf};
  c.se_methods = {VarianceMethod::hc3};
  const auto r = run_monte_carlo(c);
  for (const auto& row : r.rows) {
    EXPECT_GE(row.failures, 0);
    EXPECT_LE(row.failures, row.reps);
  }
}

TEST(MonteCarlo, ThreadCountDoesNotChangeCsv) {
  SimConfig c = small_config();
  c.reps = 30;
  std::string first;
  for (unsigned threads : {1u, 2u, 8u}) {
    std::ostringstream os;
    write_csv(os, run_monte_carlo(c, threads));
    if (first.empty()) {
      first = os.str();
    } else {
      EXPECT_EQ(os.str(), first) << threads;
    }
  }
}

TEST(Report, CsvHeaderAndNullFields) {
  SimConfig c = small_config();
  c.p_grid = {2};
  c.reps = 5;
  c.error_kind = ErrorKind::zero;
  c.estimators = {EstimatorId::cf};
  c.se_methods = {};
  std::ostringstream os;
  write_csv(os, run_monte_carlo(c));
  std::istringstream is(os.str());
  std::string header, line;
  std::getline(is, header);
  EXPECT_EQ(header,
            "design,df,error_kind,p,estimator,se_method,bias,relative_bias,sd,sd_ratio_vs_cf,coverage,mean_se,failures,"
            "reps");
  std::getline(is, line);
  std::vector<std::string> f;
  std::istringstream ls(line);
  for (std::string cell; std::getline(ls, cell, ',');) f.push_back(cell);
  if (line.back() == ',') f.emplace_back();
  ASSERT_EQ(f.size(), 14u);
  EXPECT_EQ(f[0], "zero_t3");
  EXPECT_EQ(f[1], "3");
  EXPECT_EQ(f[2], "zero");
  EXPECT_EQ(f[3], "2");
  EXPECT_EQ(f[4], "cf");
  EXPECT_EQ(f[5], "");
  EXPECT_NEAR(std::stod(f[6]), 0.0, 1e-10);
  EXPECT_EQ(f[7], "");
  EXPECT_EQ(f[10], "");
  EXPECT_EQ(f[11], "");
  EXPECT_EQ(f[12], "0");
  EXPECT_EQ(f[13], "5");
}

TEST(Report, DoublesRoundTrip) {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-17, 123456789.125}) EXPECT_EQ(std::stod(format_double(v)), v);
  EXPECT_EQ(format_double(std::nan("")), "");
}
