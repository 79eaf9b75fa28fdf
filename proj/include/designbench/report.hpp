#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "designbench/simulation.hpp"

namespace designbench {

// Shortest round-trip decimal form. NaN prints as an empty field.
inline std::string format_double(double v) {
  if (std::isnan(v)) return {};
  if (v == 0.0) return "0";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::string format_double(const std::optional<double>& v) { return v ? format_double(*v) : std::string{}; }

// Fixed number of significant digits for human-readable tables.
inline std::string format_significant(double v, int digits = 6) {
  if (std::isnan(v)) return "NA";
  if (v == 0.0) return "0";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, digits);
  return std::string(buf, res.ptr);
}

inline constexpr std::string_view csv_header =
    "design,df,error_kind,p,estimator,se_method,bias,relative_bias,sd,sd_ratio_vs_cf,coverage,mean_se,failures,reps";

inline void write_csv_row(std::ostream& os, const SimRow& r) {
  os << r.design << ',' << r.df << ',' << to_string(r.error_kind) << ',' << r.p << ',' << to_string(r.estimator) << ','
     << (r.se_method ? std::string(to_string(*r.se_method)) : std::string{}) << ',' << format_double(r.bias) << ','
     << format_double(r.relative_bias) << ',' << format_double(r.sd) << ',' << format_double(r.sd_ratio_vs_cf) << ','
     << format_double(r.coverage) << ',' << format_double(r.mean_se) << ',' << r.failures << ',' << r.reps << '\n';
}

inline void write_csv(std::ostream& os, const std::vector<SimRow>& rows) {
  os << csv_header << '\n';
  for (const auto& r : rows) write_csv_row(os, r);
}

inline void write_csv(std::ostream& os, const SimResult& res) { write_csv(os, res.rows); }

// Left-aligned text table, columns separated by two spaces.
inline void write_table(std::ostream& os, const std::vector<std::vector<std::string>>& cells) {
  std::vector<std::size_t> width;
  for (const auto& row : cells) {
    if (width.size() < row.size()) width.resize(row.size(), 0);
    for (std::size_t j = 0; j < row.size(); ++j) width[j] = std::max(width[j], row[j].size());
  }
  for (const auto& row : cells) {
    std::string line;
    for (std::size_t j = 0; j < row.size(); ++j) {
      line += row[j];
      if (j + 1 < row.size()) line += std::string(width[j] - row[j].size() + 2, ' ');
    }
    os << line << '\n';
  }
}

// One line per row: p, estimator, SE method, relative bias, sd, coverage.
inline void write_summary(std::ostream& os, const SimResult& res) {
  std::vector<std::vector<std::string>> cells{{"p", "estimator", "se", "rel_bias", "sd", "coverage", "failures"}};
  auto opt = [](const std::optional<double>& v) { return v ? format_significant(*v) : std::string("-"); };
  for (const auto& r : res.rows) {
    cells.push_back({std::to_string(r.p), std::string(to_string(r.estimator)),
                     r.se_method ? std::string(to_string(*r.se_method)) : std::string("-"), opt(r.relative_bias),
                     format_significant(r.sd), opt(r.coverage), std::to_string(r.failures)});
  }
  write_table(os, cells);
}

}  // namespace designbench
