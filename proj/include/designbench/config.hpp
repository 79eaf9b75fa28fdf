#pragma once

#include <array>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <istream>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "designbench/data.hpp"
#include "designbench/simulation.hpp"

namespace designbench {

/// A simulation campaign: engine settings plus where to write results.
struct CampaignConfig {
  SimConfig sim;
  std::string out_dir = ".";
};

inline constexpr std::array<std::string_view, 6> required_config_keys = {"n", "pi1", "p_grid", "df", "error_kind", "reps"};
inline constexpr std::array<std::string_view, 5> optional_config_keys = {"seed", "estimators", "se_methods", "ci_level",
                                                                          "out_dir"};

namespace detail {

inline std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = s.find(',', start);
    const std::string_view item = trim(s.substr(start, comma == std::string_view::npos ? s.npos : comma - start));
    if (!item.empty()) out.emplace_back(item);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

template <typename T>
T parse_integer(std::string_view key, std::string_view v) {
  v = trim(v);
  T out{};
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc{} || res.ptr != v.data() + v.size() || v.empty()) {
    throw config_error("key '" + std::string(key) + "': '" + std::string(v) + "' is not an integer");
  }
  return out;
}

inline double parse_real(std::string_view key, std::string_view v) {
  const auto out = parse_number(v);
  if (!out) throw config_error("key '" + std::string(key) + "': '" + std::string(trim(v)) + "' is not a number");
  return *out;
}

// Comma list of integers, or start:stop:step.
inline std::vector<Index> parse_grid(std::string_view key, std::string_view v) {
  std::vector<Index> out;
  v = trim(v);
  if (v.find(':') != std::string_view::npos) {
    std::vector<Index> parts;
    std::size_t start = 0;
    for (;;) {
      const std::size_t colon = v.find(':', start);
      parts.push_back(parse_integer<Index>(key, v.substr(start, colon == v.npos ? v.npos : colon - start)));
      if (colon == v.npos) break;
      start = colon + 1;
    }
    if (parts.size() != 3 || parts[2] < 1 || parts[1] < parts[0]) {
      throw config_error("key '" + std::string(key) + "': expected start:stop:step with step >= 1");
    }
    for (Index p = parts[0]; p <= parts[1]; p += parts[2]) out.push_back(p);
    return out;
  }
  for (const auto& item : split_list(v)) out.push_back(parse_integer<Index>(key, item));
  if (out.empty()) throw config_error("key '" + std::string(key) + "': empty list");
  return out;
}

template <typename F>
auto rethrow_as_config(std::string_view key, F&& f) {
  try {
    return f();
  } catch (const config_error&) {
    throw;
  } catch (const error& e) {
    throw config_error("key '" + std::string(key) + "': " + e.what());
  }
}

}  // namespace detail

/// Applies one key=value setting.
inline void apply_config_value(CampaignConfig& c, std::string_view key, std::string_view value) {
  SimConfig& s = c.sim;
  if (key == "n") {
    s.n = detail::parse_integer<Index>(key, value);
  } else if (key == "pi1") {
    s.pi1 = detail::parse_real(key, value);
  } else if (key == "p_grid") {
    s.p_grid = detail::parse_grid(key, value);
  } else if (key == "df") {
    s.df = detail::parse_integer<int>(key, value);
  } else if (key == "error_kind") {
    s.error_kind = detail::rethrow_as_config(key, [&] { return parse_error_kind(detail::trim(value)); });
  } else if (key == "reps") {
    s.reps = detail::parse_integer<Index>(key, value);
  } else if (key == "seed") {
    s.master_seed = detail::parse_integer<std::uint64_t>(key, value);
  } else if (key == "estimators") {
    s.estimators.clear();
    for (const auto& e : detail::split_list(value)) {
      s.estimators.push_back(detail::rethrow_as_config(key, [&] { return parse_estimator(e); }));
    }
  } else if (key == "se_methods") {
    s.se_methods.clear();
    for (const auto& m : detail::split_list(value)) {
      s.se_methods.push_back(detail::rethrow_as_config(key, [&] { return parse_variance_method(m); }));
    }
  } else if (key == "ci_level") {
    s.ci_level = detail::parse_real(key, value);
  } else if (key == "out_dir") {
    c.out_dir = std::string(detail::trim(value));
  } else {
    throw config_error("unknown key '" + std::string(key) + "'");
  }
}

/// Flat key=value file. '#' starts a comment; blank lines are ignored.
inline CampaignConfig parse_campaign_config(std::istream& in) {
  CampaignConfig c;
  std::set<std::string, std::less<>> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string_view body = detail::trim(line);
    if (body.empty() || body == "\r") continue;
    const auto eq = body.find('=');
    if (eq == std::string_view::npos) {
      throw config_error("line " + std::to_string(lineno) + ": expected key=value");
    }
    std::string_view value = body.substr(eq + 1);
    if (!value.empty() && value.back() == '\r') value.remove_suffix(1);
    const std::string key(detail::trim(body.substr(0, eq)));
    if (!seen.insert(key).second) throw config_error("key '" + key + "' is set twice");
    apply_config_value(c, key, value);
  }
  for (auto key : required_config_keys) {
    if (!seen.count(key)) throw config_error("missing required key '" + std::string(key) + "'");
  }
  return c;
}

inline CampaignConfig read_campaign_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open config '" + path + "'");
  return parse_campaign_config(in);
}

/// Engine-level validation reported as a configuration error.
inline void validate_campaign(const CampaignConfig& c) {
  try {
    c.sim.validate();
  } catch (const error& e) {
    throw config_error(e.what());
  }
}

}  // namespace designbench
