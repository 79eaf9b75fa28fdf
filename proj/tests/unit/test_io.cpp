#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "designbench.hpp"
#include "designbench/analysis.hpp"
#include "designbench/config.hpp"
#include "designbench/data.hpp"
#include "designbench/verify.hpp"
#include "support/oracles.hpp"

using namespace designbench;

namespace {

DataTable parse(const std::string& text) {
  std::istringstream in(text);
  return read_csv(in);
}

CampaignConfig parse_config(const std::string& text) {
  std::istringstream in(text);
  return parse_campaign_config(in);
}

const std::string required = "n=60\npi1=0.5\np_grid=2,4\ndf=3\nerror_kind=worst\nreps=5\n";

}  // namespace

TEST(ReadCsv, QuotedFieldsCrlfAndBom) {
  const auto t = parse("\xEF\xBB\xBF" "a, b ,c\r\n1,\"x,y\",\"say \"\"hi\"\"\"\r\n\r\n2,\"two\nlines\",3\n");
  ASSERT_EQ(t.header, (std::vector<std::string>{"a", "b", "c"}));
  ASSERT_EQ(t.rows.size(), 2u);
  EXPECT_EQ(t.rows[0][1], "x,y");
  EXPECT_EQ(t.rows[0][2], "say \"hi\"");
  EXPECT_EQ(t.rows[1][1], "two\nlines");
  EXPECT_EQ(t.column("c"), 2);
  EXPECT_THROW(t.column("d"), parse_error);
}

TEST(ReadCsv, RaggedRowsAndEmptyInputAreParseErrors) {
  EXPECT_THROW(parse("a,b\n1\n"), parse_error);
  EXPECT_THROW(parse(""), parse_error);
  EXPECT_THROW(parse("a,b\n\"1,2\n"), parse_error);
}

TEST(ReadCsv, NumericColumnsAreLocaleIndependent) {
  const auto t = parse("y,t,s\n1.5,1,a\n-2e-3,0,b\n+3,1,a\n");
  const Vector y = numeric_column(t, "y");
  EXPECT_EQ(y(0), 1.5);
  EXPECT_EQ(y(1), -2e-3);
  EXPECT_EQ(y(2), 3.0);
  EXPECT_EQ(binary_column(t, "t"), (std::vector<std::uint8_t>{1, 0, 1}));
  EXPECT_EQ(label_column(t, "s"), (std::vector<int>{0, 1, 0}));
  EXPECT_THROW(numeric_column(parse("y\n1,5\n"), "y"), parse_error);
  EXPECT_THROW(numeric_column(parse("y\n1;5\n"), "y"), parse_error);
}

TEST(ReadCsv, MissingAndNonBinaryValues) {
  const auto t = parse("y,t,u\nNA,1,0.5\n2,0,1\n");
  EXPECT_THROW(numeric_column(t, "y"), missing_value);
  EXPECT_THROW(binary_column(t, "u"), non_binary_treatment);
  EXPECT_THROW(binary_column(parse("t\n\n1\n,\n"), "t"), parse_error);
  EXPECT_EQ(label_column(parse("s\n7\n3\n7\n"), "s"), (std::vector<int>{7, 3, 7}));
}

TEST(CampaignConfig, ParsesEveryKey) {
  const auto c = parse_config(required +
                              "# comment\nseed = 42\nestimators = cf, unbiased\nse_methods = hc3\nci_level=0.9\nout_dir = res\n");
  EXPECT_EQ(c.sim.n, 60);
  EXPECT_EQ(c.sim.pi1, 0.5);
  EXPECT_EQ(c.sim.p_grid, (std::vector<Index>{2, 4}));
  EXPECT_EQ(c.sim.df, 3);
  EXPECT_EQ(c.sim.error_kind, ErrorKind::worst);
  EXPECT_EQ(c.sim.reps, 5);
  EXPECT_EQ(c.sim.master_seed, 42u);
  EXPECT_EQ(c.sim.estimators, (std::vector<EstimatorId>{EstimatorId::cf, EstimatorId::unbiased}));
  EXPECT_EQ(c.sim.se_methods, (std::vector<VarianceMethod>{VarianceMethod::hc3}));
  EXPECT_EQ(c.sim.ci_level, 0.9);
  EXPECT_EQ(c.out_dir, "res");
  EXPECT_NO_THROW(validate_campaign(c));
}

TEST(CampaignConfig, GridRanges) {
  EXPECT_EQ(parse_config("n=60\npi1=0.5\np_grid=5:20:5\ndf=3\nerror_kind=normal\nreps=5\n").sim.p_grid,
            (std::vector<Index>{5, 10, 15, 20}));
  EXPECT_THROW(parse_config("n=60\npi1=0.5\np_grid=5:2:1\ndf=3\nerror_kind=normal\nreps=5\n"), config_error);
}

TEST(CampaignConfig, ErrorsNameTheKey) {
  for (const char* key : {"n", "pi1", "p_grid", "df", "error_kind", "reps"}) {
    std::string text;
    std::istringstream in(required);
    for (std::string line; std::getline(in, line);) {
      if (line.rfind(std::string(key) + "=", 0) != 0) text += line + "\n";
    }
    try {
      parse_config(text);
      ADD_FAILURE() << key;
    } catch (const config_error& e) {
      EXPECT_NE(std::string(e.what()).find("'" + std::string(key) + "'"), std::string::npos) << e.what();
    }
  }
  auto message = [](const std::string& text) {
    try {
      parse_config(text);
    } catch (const config_error& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  EXPECT_NE(message(required + "reps=7\n").find("'reps'"), std::string::npos);
  EXPECT_NE(message(required + "colour=red\n").find("'colour'"), std::string::npos);
  EXPECT_NE(message(required + "seed=-1\n").find("'seed'"), std::string::npos);
  EXPECT_NE(message(required + "estimators=adj,best\n").find("'estimators'"), std::string::npos);
  EXPECT_NE(message(required + "oops\n").find("line 7"), std::string::npos);
  auto bad = parse_config(required);
  bad.sim.p_grid = {29};
  EXPECT_THROW(validate_campaign(bad), config_error);
}

TEST(Analysis, MatchesLibraryEstimators) {
  Rng rng(5);
  const Index n = 40;
  const Matrix x = oracle::random_matrix(rng, n, 3);
  const Assignment t = sample_assignment(n, 15, rng);
  Vector y(n);
  for (Index i = 0; i < n; ++i) y(i) = x.row(i).sum() + (t[i] ? 1.0 : 0.0) + rng.normal();
  std::ostringstream csv;
  csv << "y,t,a,b,c\n";
  csv.precision(17);
  for (Index i = 0; i < n; ++i) csv << y(i) << ',' << (t[i] ? 1 : 0) << ',' << x(i, 0) << ',' << x(i, 1) << ',' << x(i, 2) << '\n';
  AnalysisRequest req;
  req.outcome = "y";
  req.treatment = "t";
  req.all_covariates = true;
  const AnalysisReport rep = analyze(parse(csv.str()), req);
  EXPECT_EQ(rep.covariates, (std::vector<std::string>{"a", "b", "c"}));
  ASSERT_EQ(rep.rows.size(), 20u);
  const ObservedSample s(y, t, x);
  const SampleFits fits(s);
  for (const auto& row : rep.rows) {
    if (row.estimator == EstimatorId::dif) continue;
    EXPECT_NEAR(row.estimate, estimate(row.estimator, s, fits).tau_hat, 1e-12);
    const VarianceReport vr = variance(*row.se_method, s, fits);
    EXPECT_NEAR(*row.se, vr.se, 1e-12);
    EXPECT_NEAR(*row.t_stat, row.estimate / vr.se, 1e-9);
    EXPECT_NEAR(*row.ci_upper - *row.ci_lower, 2.0 * 1.959963984540054 * vr.se, 1e-9);
  }
}

TEST(Analysis, StratifiedRequestRestrictions) {
  const auto t = parse("y,t,s,x\n1,1,1,0.1\n2,0,1,0.5\n3,1,1,0.2\n2,0,1,0.9\n1,1,2,0.3\n0,0,2,0.4\n2,1,2,0.8\n1,0,2,0.6\n");
  AnalysisRequest req;
  req.outcome = "y";
  req.treatment = "t";
  req.stratum = "s";
  req.se_methods = {VarianceMethod::hc3};
  EXPECT_THROW(analyze(t, req), config_error);
  req.estimators = {EstimatorId::cf};
  req.se_methods = {VarianceMethod::hc0};
  EXPECT_THROW(analyze(t, req), config_error);
}

TEST(Verify, SuitesPassAndDetectCorruption) {
  for (const auto& c : run_verify(VerifySuite::all)) EXPECT_TRUE(c.passed) << c.suite << " " << c.name << " " << c.detail;
  EXPECT_EQ(run_verify(VerifySuite::moments).size(), 4u);
  EXPECT_THROW(parse_verify_suite("everything"), parse_error);
  const FinitePopulation pop = fixtures::population_from(fixtures::unbiasedness_8_4_3, 4);
  EXPECT_GT(std::abs(enumeration_bias(pop, EstimatorId::adj)), 1e-6);
}
