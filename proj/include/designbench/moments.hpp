#pragma once

// Exact mixed central moments E[prod_k (T_{i_k} - pi)^{a_k}] over mutually
// distinct units under complete randomization (n1 of n treated, pi = n1/n).
//
// Three routes, all in exact rational arithmetic:
//   closed_form_moment  known closed forms where they are exact, otherwise
//                       the mechanical expansion below;
//   expanded_moment     (T - pi)^a = c_a T + (-pi)^a with c_a = (1-pi)^a - (-pi)^a
//                       (T^2 = T), then E[T_1 ... T_k] = n1^(k) / n^(k) (falling powers);
//   enumerated_moment   brute-force average over every assignment.

#include <algorithm>
#include <array>
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "designbench/errors.hpp"
#include "designbench/population.hpp"

namespace designbench {

using Rational = boost::multiprecision::cpp_rational;
using BigInt = boost::multiprecision::cpp_int;

/// One exponent per distinct unit slot.
struct MomentSpec {
  std::vector<int> exponents;
  std::int64_t n = 0;
  std::int64_t n1 = 0;
};

inline std::string pattern_string(const std::vector<int>& exps) {
  std::string out = "[";
  for (std::size_t k = 0; k < exps.size(); ++k) out += (k ? "," : "") + std::to_string(exps[k]);
  return out + "]";
}

/// Exponents sorted descending; validates the request.
inline std::vector<int> canonical_pattern(const MomentSpec& spec) {
  if (spec.n < 2 || spec.n1 < 1 || spec.n1 > spec.n - 1) throw invalid_design("need 1 <= n1 <= n-1");
  if (spec.exponents.empty()) throw unsupported("empty moment pattern");
  if (static_cast<std::int64_t>(spec.exponents.size()) > spec.n) {
    throw invalid_design("pattern " + pattern_string(spec.exponents) + " needs more distinct units than n");
  }
  int order = 0;
  for (int a : spec.exponents) {
    if (a < 1) throw unsupported("exponents must be >= 1");
    order += a;
  }
  if (order > 6) throw unsupported("moments above total order 6 are not covered");
  std::vector<int> p = spec.exponents;
  std::sort(p.begin(), p.end(), std::greater<>());
  return p;
}

/// Every distinct-index pattern with a known closed form or order statement, orders 1 to 6.
inline const std::vector<std::vector<int>>& closed_form_patterns() {
  static const std::vector<std::vector<int>> patterns = {
      {1},          {2},       {1, 1},       {3},          {2, 1},          {1, 1, 1},
      {4},          {2, 2},    {2, 1, 1},    {1, 1, 1, 1}, {3, 3},          {4, 2},
      {5, 1},       {4, 1, 1}, {2, 2, 1, 1}, {3, 1, 1, 1}, {2, 1, 1, 1, 1}, {1, 1, 1, 1, 1, 1},
      {2, 2, 2},
  };
  return patterns;
}

inline Rational falling_ratio(std::int64_t n1, std::int64_t n, int k) {
  BigInt num = 1, den = 1;
  for (int j = 0; j < k; ++j) {
    num *= (n1 - j);
    den *= (n - j);
  }
  return Rational(num, den);
}

inline Rational rational_pow(const Rational& x, int k) {
  Rational r = 1;
  for (int j = 0; j < k; ++j) r *= x;
  return r;
}

inline Rational expanded_moment(const MomentSpec& spec) {
  const auto pat = canonical_pattern(spec);
  const Rational pi(spec.n1, spec.n);
  const auto m = pat.size();
  Rational total = 0;
  for (std::uint32_t mask = 0; mask < (1u << m); ++mask) {
    Rational coef = 1;
    int k = 0;
    for (std::size_t s = 0; s < m; ++s) {
      if (mask >> s & 1u) {
        coef *= rational_pow(1 - pi, pat[s]) - rational_pow(-pi, pat[s]);
        ++k;
      } else {
        coef *= rational_pow(-pi, pat[s]);
      }
    }
    total += coef * falling_ratio(spec.n1, spec.n, k);
  }
  return total;
}

inline Rational closed_form_moment(const MomentSpec& spec) {
  const auto pat = canonical_pattern(spec);
  if (std::find(closed_form_patterns().begin(), closed_form_patterns().end(), pat) == closed_form_patterns().end()) {
    throw unsupported("no closed form for pattern " + pattern_string(pat));
  }
  const BigInt n = spec.n, n1 = spec.n1, n0 = spec.n - spec.n1;
  const Rational pi(spec.n1, spec.n);
  const Rational q = 1 - pi;
  using P = std::vector<int>;
  if (pat == P{1}) return 0;
  if (pat == P{2}) return pi * q;
  if (pat == P{1, 1}) return -pi * q / Rational(n - 1);
  if (pat == P{3}) return pi * q * (1 - 2 * pi);
  if (pat == P{2, 1}) return -pi * q * (1 - 2 * pi) / Rational(n - 1);
  if (pat == P{1, 1, 1}) return 2 * pi * q * (1 - 2 * pi) / Rational((n - 1) * (n - 2));
  if (pat == P{4}) return pi * q * (1 - 3 * pi * q);
  if (pat == P{2, 2}) {
    // (T - pi)^2 = (1 - 2 pi) T + pi^2
    return Rational(n1 * (n1 - 1), n * (n - 1)) * (1 - 2 * pi) * (1 - 2 * pi) + 2 * pi * pi * pi * (1 - 2 * pi) +
           rational_pow(pi, 4);
  }
  if (pat == P{2, 1, 1}) {
    const BigInt num = n1 * n0 * (n1 * n1 * n - n1 * n * n) + n1 * n0 * (6 * n1 * n1 - 6 * n1 * n + 2 * n * n);
    return Rational(num, n * n * n * n * (n - 1) * (n - 2));
  }
  if (pat == P{1, 1, 1, 1}) {
    const BigInt num = 3 * n1 * (n1 - n) * (n1 * n1 * n - n1 * n * n + 6 * n1 * (n1 - n) + 2 * n * n);
    return Rational(num, n * n * n * n * (n - 1) * (n - 2) * (n - 3));
  }
  if (pat == P{1, 1, 1, 1, 1, 1}) {
    const BigInt num = 5 * n1 *
                           (-24 * pow(n, 5) + 2 * n1 * pow(n, 4) * (72 + 13 * n) -
                            3 * n1 * n1 * pow(n, 3) * (120 + 46 * n + n * n) + pow(n1, 5) * (120 + 86 * n + 3 * n * n)) +
                       5 * n1 *
                           (-3 * pow(n1, 4) * n * (120 + 86 * n + 3 * n * n) +
                            pow(n1, 3) * n * n * (480 + 284 * n + 9 * n * n));
    return Rational(num, pow(n, 6) * (n - 1) * (n - 2) * (n - 3) * (n - 4) * (n - 5));
  }
  // Patterns stated only up to order: exact value by expansion.
  return expanded_moment(spec);
}

/// Brute-force average over all C(n, n1) assignments, slots on units 0..m-1.
inline Rational enumerated_moment(const MomentSpec& spec, std::uint64_t cap = default_enumeration_cap) {
  const auto pat = canonical_pattern(spec);
  const Rational pi(spec.n1, spec.n);
  // (t - pi)^a for t in {0, 1}
  std::vector<std::array<Rational, 2>> powers;
  for (int a : pat) powers.push_back({rational_pow(-pi, a), rational_pow(1 - pi, a)});
  auto it = enumerate_assignments(spec.n, spec.n1, cap);
  Rational total = 0;
  Assignment t;
  std::uint64_t count = 0;
  while (it.next(t)) {
    Rational prod = 1;
    for (std::size_t s = 0; s < pat.size(); ++s) prod *= powers[s][t[static_cast<Index>(s)] ? 1 : 0];
    total += prod;
    ++count;
  }
  return total / Rational(count);
}

/// An asymptotic statement E[pattern] = leading(n, n1) + O(n^{-order}).
struct OrderClaim {
  std::vector<int> pattern;
  std::function<Rational(std::int64_t n, std::int64_t n1)> leading;
  int order = 0;
  std::string description;
};

inline std::vector<OrderClaim> order_claims() {
  auto pq2 = [](std::int64_t n, std::int64_t n1) -> Rational {
    const Rational pi(n1, n);
    return pi * pi * (1 - pi) * (1 - pi);
  };
  auto zero = [](std::int64_t, std::int64_t) -> Rational { return Rational(0); };
  return {
      {{2, 2}, [pq2](std::int64_t n, std::int64_t n1) -> Rational { return Rational(n, n - 1) * pq2(n, n1); }, 1, "n/(n-1) pi^2(1-pi)^2 + O(1/n)"},
      {{2, 2}, pq2, 1, "pi^2(1-pi)^2 + O(1/n)"},
      {{2, 1, 1}, [pq2](std::int64_t n, std::int64_t n1) -> Rational { return -Rational(n, (n - 1) * (n - 2)) * pq2(n, n1); }, 2,
       "-n/((n-1)(n-2)) pi^2(1-pi)^2 + O(n^-2)"},
      {{1, 1, 1, 1},
       [pq2](std::int64_t n, std::int64_t n1) -> Rational { return Rational(3 * n, n - 1) * pq2(n, n1) / Rational((n - 2) * (n - 3)); }, 3,
       "3n/(n-1) pi^2(1-pi)^2/((n-2)(n-3)) + O(n^-3)"},
      {{3, 3}, zero, 0, "O(1)"},
      {{4, 2}, zero, 0, "O(1)"},
      {{5, 1}, zero, 1, "O(1/n)"},
      {{4, 1, 1}, zero, 1, "O(1/n)"},
      {{2, 2, 1, 1}, zero, 1, "O(1/n)"},
      {{3, 1, 1, 1}, zero, 2, "O(n^-2)"},
      {{2, 1, 1, 1, 1}, zero, 2, "O(n^-2)"},
      {{1, 1, 1, 1, 1, 1}, zero, 3, "O(n^-3)"},
  };
}

/// |exact - leading| * n^order at each grid size (pi = n1/n held fixed by the caller).
inline std::vector<double> scaled_claim_errors(const OrderClaim& claim, const std::vector<std::int64_t>& ns,
                                               std::int64_t treated_per, std::int64_t units_per) {
  std::vector<double> out;
  for (auto n : ns) {
    const auto n1 = n * treated_per / units_per;
    Rational diff = closed_form_moment({claim.pattern, n, n1}) - claim.leading(n, n1);
    if (diff < 0) diff = -diff;
    for (int k = 0; k < claim.order; ++k) diff *= n;
    out.push_back(diff.convert_to<double>());
  }
  return out;
}

}  // namespace designbench
