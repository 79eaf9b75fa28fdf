#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "designbench/data.hpp"
#include "designbench/estimators.hpp"
#include "designbench/population.hpp"
#include "designbench/report.hpp"
#include "designbench/stratified.hpp"
#include "designbench/variance.hpp"

namespace designbench {

struct AnalysisRequest {
  std::string outcome;
  std::string treatment;
  /// Empty with all_covariates set means every remaining column.
  std::vector<std::string> covariates;
  bool all_covariates = false;
  std::optional<std::string> stratum;
  std::vector<EstimatorId> estimators{all_estimators.begin(), all_estimators.end()};
  std::vector<VarianceMethod> se_methods{all_variance_methods.begin(), all_variance_methods.end()};
  double level = 0.95;
};

struct AnalysisRow {
  EstimatorId estimator = EstimatorId::dif;
  std::optional<VarianceMethod> se_method;
  double estimate = 0.0;
  std::optional<double> se;
  std::optional<double> t_stat;
  std::optional<double> ci_lower;
  std::optional<double> ci_upper;
  bool clamped = false;
};

struct AnalysisReport {
  Index n = 0;
  Index n1 = 0;
  Index n0 = 0;
  std::vector<std::string> covariates;
  std::optional<std::string> stratum;
  Index strata = 0;
  double level = 0.95;
  std::vector<AnalysisRow> rows;
};

namespace detail {

inline std::vector<std::string> resolve_covariates(const DataTable& t, const AnalysisRequest& req) {
  for (const auto& name : {req.outcome, req.treatment}) t.column(name);
  if (req.stratum) t.column(*req.stratum);
  if (!req.all_covariates) {
    for (const auto& c : req.covariates) t.column(c);
    return req.covariates;
  }
  std::vector<std::string> out;
  for (const auto& h : t.header) {
    if (h == req.outcome || h == req.treatment || (req.stratum && h == *req.stratum)) continue;
    out.push_back(h);
  }
  return out;
}

inline void append_rows(std::vector<AnalysisRow>& rows, const PointEstimate& pe,
                        const std::vector<VarianceReport>& vars, double level) {
  if (vars.empty()) {
    rows.push_back({pe.estimator_id, std::nullopt, pe.tau_hat, std::nullopt, std::nullopt, std::nullopt, std::nullopt,
                    false});
    return;
  }
  for (const auto& vr : vars) {
    const Interval ci = confidence_interval(pe, vr, level);
    AnalysisRow r{pe.estimator_id, vr.method, pe.tau_hat, vr.se, std::nullopt, ci.lo, ci.hi, vr.clamped};
    if (vr.se > 0.0) r.t_stat = pe.tau_hat / vr.se;
    rows.push_back(r);
  }
}

[[noreturn]] inline void rethrow_with_hint(EstimatorId id, const error& e, bool singular) {
  const std::string msg = std::string(to_string(id)) + ": " + e.what() + " (reduce covariates or drop estimator)";
  if (singular) throw singular_gram(msg);
  throw leverage_one(msg);
}

}  // namespace detail

/// Runs every requested estimator and SE method on a parsed table. With a
/// stratum column only cf with hc3 or dbhc3 is available.
inline AnalysisReport analyze(const DataTable& table, const AnalysisRequest& req) {
  AnalysisReport rep;
  rep.covariates = detail::resolve_covariates(table, req);
  rep.stratum = req.stratum;
  rep.level = req.level;
  if (!(req.level > 0.0 && req.level < 1.0)) throw config_error("level must lie in (0, 1)");
  if (req.estimators.empty()) throw config_error("no estimators requested");

  Vector y = numeric_column(table, req.outcome);
  Assignment t(binary_column(table, req.treatment));
  Matrix x(static_cast<Index>(table.rows.size()), static_cast<Index>(rep.covariates.size()));
  for (std::size_t j = 0; j < rep.covariates.size(); ++j) x.col(static_cast<Index>(j)) = numeric_column(table, rep.covariates[j]);
  rep.n = t.size();
  rep.n1 = t.treated();
  rep.n0 = t.controls();

  if (req.stratum) {
    for (auto id : req.estimators) {
      if (id != EstimatorId::cf) {
        throw config_error("estimators: stratified analysis supports cf only, not " + std::string(to_string(id)));
      }
    }
    for (auto m : req.se_methods) {
      if (m != VarianceMethod::hc3 && m != VarianceMethod::dbhc3) {
        throw config_error("se: stratified analysis supports hc3 and dbhc3 only, not " + std::string(to_string(m)));
      }
    }
    const ObservedSample s(std::move(y), std::move(t), x, label_column(table, *req.stratum));
    const StratifiedSample ss(s);
    rep.strata = static_cast<Index>(ss.strata().size());
    const PointEstimate pe = stratified_cross_fitted(ss);
    std::vector<VarianceReport> vars;
    for (auto m : req.se_methods) vars.push_back(stratified_variance(ss, m));
    detail::append_rows(rep.rows, pe, vars, req.level);
    return rep;
  }

  const ObservedSample s(y, t, x);
  std::optional<ObservedSample> plain;
  std::optional<SampleFits> fits;
  std::optional<SampleFits> plain_fits;
  for (auto id : req.estimators) {
    try {
      PointEstimate pe;
      std::vector<VarianceReport> vars;
      if (id == EstimatorId::dif) {
        if (!plain) plain.emplace(y, t, Design::intercept_only(rep.n));
        pe = diff_in_means(*plain);
        if (!req.se_methods.empty() && !plain_fits) plain_fits.emplace(*plain);
        for (auto m : req.se_methods) vars.push_back(variance(m, *plain, *plain_fits));
      } else {
        if (!fits) fits.emplace(s);
        pe = estimate(id, s, *fits);
        for (auto m : req.se_methods) vars.push_back(variance(m, s, *fits));
      }
      detail::append_rows(rep.rows, pe, vars, req.level);
    } catch (const singular_gram& e) {
      detail::rethrow_with_hint(id, e, true);
    } catch (const leverage_one& e) {
      detail::rethrow_with_hint(id, e, false);
    }
  }
  return rep;
}

inline constexpr std::string_view analysis_csv_header = "estimator,se_method,estimate,se,t_stat,ci_lower,ci_upper,clamped";

inline void write_analysis_csv(std::ostream& os, const AnalysisReport& rep) {
  os << analysis_csv_header << '\n';
  for (const auto& r : rep.rows) {
    os << to_string(r.estimator) << ',' << (r.se_method ? std::string(to_string(*r.se_method)) : std::string{}) << ','
       << format_double(r.estimate) << ',' << format_double(r.se) << ',' << format_double(r.t_stat) << ','
       << format_double(r.ci_lower) << ',' << format_double(r.ci_upper) << ',' << (r.clamped ? 1 : 0) << '\n';
  }
}

inline void write_analysis_table(std::ostream& os, const AnalysisReport& rep) {
  os << "n = " << rep.n << " (treated " << rep.n1 << ", control " << rep.n0 << "), covariates = " << rep.covariates.size();
  if (rep.stratum) os << ", strata = " << rep.strata << " (" << *rep.stratum << ")";
  os << ", level = " << format_significant(rep.level) << '\n';
  std::vector<std::vector<std::string>> cells{{"estimator", "se_method", "estimate", "se", "t_stat", "ci_lower", "ci_upper"}};
  auto opt = [](const std::optional<double>& v) { return v ? format_significant(*v) : std::string("-"); };
  bool any_clamped = false;
  for (const auto& r : rep.rows) {
    std::string se = opt(r.se);
    if (r.clamped) {
      se += "*";
      any_clamped = true;
    }
    cells.push_back({std::string(to_string(r.estimator)),
                     r.se_method ? std::string(to_string(*r.se_method)) : std::string("-"), format_significant(r.estimate),
                     se, opt(r.t_stat), opt(r.ci_lower), opt(r.ci_upper)});
  }
  write_table(os, cells);
  if (any_clamped) os << "* negative variance estimate, SE clamped to 0\n";
}

}  // namespace designbench
