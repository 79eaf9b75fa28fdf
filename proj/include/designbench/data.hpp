#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "designbench/errors.hpp"
#include "designbench/linalg.hpp"

namespace designbench {

/// Header plus string cells, as read from a comma-separated file.
struct DataTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  Index column(std::string_view name) const {
    for (std::size_t j = 0; j < header.size(); ++j) {
      if (header[j] == name) return static_cast<Index>(j);
    }
    throw parse_error("no column named '" + std::string(name) + "'");
  }
};

namespace detail {

// Splits one record, honouring double-quoted fields. May consume further lines
// when a quoted field spans a newline.
inline std::vector<std::string> split_record(std::istream& in, std::string line, std::size_t& lineno) {
  std::vector<std::string> out;
  std::string cell;
  bool quoted = false;
  std::size_t k = 0;
  for (;;) {
    if (k == line.size()) {
      if (!quoted) break;
      std::string more;
      if (!std::getline(in, more)) throw parse_error("line " + std::to_string(lineno) + ": unterminated quoted field");
      ++lineno;
      if (!more.empty() && more.back() == '\r') more.pop_back();
      cell += '\n';
      line = std::move(more);
      k = 0;
      continue;
    }
    const char c = line[k++];
    if (quoted) {
      if (c == '"') {
        if (k < line.size() && line[k] == '"') {
          cell += '"';
          ++k;
        } else {
          quoted = false;
        }
      } else {
        cell += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cell));
      cell.clear();
    } else {
      cell += c;
    }
  }
  out.push_back(std::move(cell));
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

}  // namespace detail

inline DataTable read_csv(std::istream& in) {
  DataTable t;
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!have_header && lineno == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
    if (line.empty()) continue;
    const std::size_t start = lineno;
    auto cells = detail::split_record(in, line, lineno);
    if (!have_header) {
      for (auto& c : cells) c = std::string(detail::trim(c));
      t.header = std::move(cells);
      have_header = true;
      continue;
    }
    if (cells.size() != t.header.size()) {
      throw parse_error("line " + std::to_string(start) + ": expected " + std::to_string(t.header.size()) +
                        " fields, found " + std::to_string(cells.size()));
    }
    t.rows.push_back(std::move(cells));
  }
  if (!have_header) throw parse_error("input has no header line");
  return t;
}

inline DataTable read_csv_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw parse_error("cannot open '" + path + "'");
  return read_csv(in);
}

/// Missing-value markers: empty, NA, NaN, ".".
inline bool is_missing(std::string_view cell) {
  cell = detail::trim(cell);
  return cell.empty() || cell == "NA" || cell == "NaN" || cell == "nan" || cell == ".";
}

/// Locale-independent number parse of one cell.
inline std::optional<double> parse_number(std::string_view cell) {
  cell = detail::trim(cell);
  if (!cell.empty() && cell.front() == '+') cell.remove_prefix(1);
  double v = 0.0;
  const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (res.ec != std::errc{} || res.ptr != cell.data() + cell.size() || cell.empty()) return std::nullopt;
  return v;
}

inline Vector numeric_column(const DataTable& t, std::string_view name) {
  const auto j = static_cast<std::size_t>(t.column(name));
  Vector out(static_cast<Index>(t.rows.size()));
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const std::string& cell = t.rows[i][j];
    const std::string where = "column '" + std::string(name) + "', data row " + std::to_string(i + 1);
    if (is_missing(cell)) throw missing_value(where + ": missing value");
    const auto v = parse_number(cell);
    if (!v) throw parse_error(where + ": '" + cell + "' is not a number");
    out(static_cast<Index>(i)) = *v;
  }
  return out;
}

inline std::vector<std::uint8_t> binary_column(const DataTable& t, std::string_view name) {
  const auto j = static_cast<std::size_t>(t.column(name));
  std::vector<std::uint8_t> out(t.rows.size());
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const std::string& cell = t.rows[i][j];
    const std::string where = "column '" + std::string(name) + "', data row " + std::to_string(i + 1);
    if (is_missing(cell)) throw missing_value(where + ": missing value");
    const auto v = parse_number(cell);
    if (!v || (*v != 0.0 && *v != 1.0)) throw non_binary_treatment(where + ": '" + cell + "' is not 0 or 1");
    out[i] = *v == 1.0 ? 1 : 0;
  }
  return out;
}

/// Integer labels when every cell is an integer, otherwise codes in order of first appearance.
inline std::vector<int> label_column(const DataTable& t, std::string_view name) {
  const auto j = static_cast<std::size_t>(t.column(name));
  std::vector<int> out(t.rows.size());
  bool integral = true;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const std::string_view cell = detail::trim(t.rows[i][j]);
    if (is_missing(cell)) {
      throw missing_value("column '" + std::string(name) + "', data row " + std::to_string(i + 1) + ": missing value");
    }
    const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), out[i]);
    integral = integral && res.ec == std::errc{} && res.ptr == cell.data() + cell.size();
  }
  if (integral) return out;
  std::vector<std::string_view> seen;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const std::string_view cell = detail::trim(t.rows[i][j]);
    std::size_t k = 0;
    while (k < seen.size() && seen[k] != cell) ++k;
    if (k == seen.size()) seen.push_back(cell);
    out[i] = static_cast<int>(k);
  }
  return out;
}

}  // namespace designbench
