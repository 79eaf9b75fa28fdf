#pragma once

// Population-level quantities from the stochastic expansion
//
//   tau_hat - tau = B + n^{-1} sum_i L_i + n^{-2} sum_{i<j} W_ij + remainder,
//
// computable only when both potential outcomes are known (simulation mode).

#include <cmath>
#include <utility>

#include "designbench/errors.hpp"
#include "designbench/linalg.hpp"
#include "designbench/population.hpp"

namespace designbench {

struct TheoreticalVariance {
  double sigma_L2 = 0.0;
  double sigma_W2 = 0.0;
  Vector rho;
};

/// rho_i = -e_i(1) + (pi/(1-pi))^2 e_i(0).
inline Vector rho(const FinitePopulation& pop) {
  const auto [e1, e0] = population_residuals(pop);
  const double odds = pop.pi() / (1.0 - pop.pi());
  return -e1 + odds * odds * e0;
}

inline double sigma_L2(const FinitePopulation& pop) {
  const auto [e1, e0] = population_residuals(pop);
  const double n = static_cast<double>(pop.n());
  const double n1 = static_cast<double>(pop.n1());
  const double n0 = static_cast<double>(pop.n0());
  return n / (n1 * (n - 1.0)) * e1.squaredNorm() + n / (n0 * (n - 1.0)) * e0.squaredNorm() -
         (e1 - e0).squaredNorm() / (n - 1.0);
}

inline double sigma_W2(const FinitePopulation& pop) {
  const auto [e1, e0] = population_residuals(pop);
  const Design& d = *pop.design();
  const Vector& lev = d.leverages();
  const double n = static_cast<double>(pop.n());
  const double n1 = static_cast<double>(pop.n1());
  const double n0 = static_cast<double>(pop.n0());
  const Vector r = rho(pop);
  const double a = n0 * n0 / (n1 * n1 * n);
  return a * (lev.array() * e1.array().square()).sum() +
         n1 * n1 / (n0 * n0 * n) * (lev.array() * e0.array().square()).sum() -
         2.0 / n * (lev.array() * e1.array() * e0.array()).sum() +
         a * offdiag_squared_hat_sum(d.z().values(), d.gram_inverse(), lev, r, r);
}

inline TheoreticalVariance theoretical_variance(const FinitePopulation& pop) {
  return {sigma_L2(pop), sigma_W2(pop), rho(pop)};
}

/// Leading-order means of HC0 and HC3. Their leverage terms differ from the first
/// two sigma_W2 terms by the factors n0/n and n1/n; both are exposed so the gap
/// can be inspected.
struct HcExpectations {
  double hc0 = 0.0;
  double hc3 = 0.0;
};

inline HcExpectations hc_expectations(const FinitePopulation& pop) {
  const auto [e1, e0] = population_residuals(pop);
  const Vector& lev = pop.design()->leverages();
  const double n = static_cast<double>(pop.n());
  const double n1 = static_cast<double>(pop.n1());
  const double n0 = static_cast<double>(pop.n0());
  const double first = n / (n1 * (n - 1.0)) * e1.squaredNorm() + n / (n0 * (n - 1.0)) * e0.squaredNorm();
  const double lev_terms = n0 / (n1 * n1) * (lev.array() * e1.array().square()).sum() +
                           n1 / (n0 * n0) * (lev.array() * e0.array().square()).sum();
  return {first - lev_terms, first + lev_terms};
}

/// n^{-1} sum_i L_i with L_i = (T_i/pi - 1)(e_i(1) + pi/(1-pi) e_i(0)).
inline double linear_component(const FinitePopulation& pop, const Assignment& t) {
  const auto [e1, e0] = population_residuals(pop);
  const double pi = pop.pi();
  double acc = 0.0;
  for (Index i = 0; i < pop.n(); ++i) {
    acc += ((t[i] ? 1.0 / pi : 0.0) - 1.0) * (e1(i) + pi / (1.0 - pi) * e0(i));
  }
  return acc / static_cast<double>(pop.n());
}

/// n^{-2} sum_{i<j} W_ij, evaluated pairwise (O(n^2 p)); meant for small populations.
inline double quadratic_component(const FinitePopulation& pop, const Assignment& t) {
  const auto [e1, e0] = population_residuals(pop);
  const Design& d = *pop.design();
  const double n = static_cast<double>(pop.n());
  const double pi = pop.pi();
  double acc = 0.0;
  for (Index i = 0; i < pop.n(); ++i) {
    const double ui = (t[i] ? 1.0 / pi : 0.0) - 1.0;
    const double vi = (t[i] ? 0.0 : 1.0 / (1.0 - pi)) - 1.0;
    for (Index j = i + 1; j < pop.n(); ++j) {
      const double uj = (t[j] ? 1.0 / pi : 0.0) - 1.0;
      const double vj = (t[j] ? 0.0 : 1.0 / (1.0 - pi)) - 1.0;
      const double k = n * d.hat_entry(i, j);  // z_i' Sigma^{-1} z_j
      acc += -ui * uj * k * (e1(i) + e1(j)) + vi * vj * k * (e0(i) + e0(j));
    }
  }
  return acc / (n * n);
}

struct BiasTerms {
  double B_adj = 0.0;
  double B_bc = 0.0;
};

/// Leading bias terms of the adjusted and bias-corrected estimators under assignment t.
/// The cross-fitted estimator has none.
inline BiasTerms bias_terms(const FinitePopulation& pop, const Assignment& t) {
  const auto [e1, e0] = population_residuals(pop);
  const Design& d = *pop.design();
  const Matrix& z = d.z().values();
  const Vector& lev = d.leverages();
  const double n = static_cast<double>(pop.n());
  const double n1 = static_cast<double>(t.treated());
  const double n0 = static_cast<double>(t.controls());
  const double pi = n1 / n;

  BiasTerms out;
  double bc1 = 0.0, bc0 = 0.0;
  Vector lz1 = Vector::Zero(d.p()), lz0 = Vector::Zero(d.p());
  Vector ze1 = Vector::Zero(d.p()), ze0 = Vector::Zero(d.p());
  Matrix g1 = Matrix::Zero(d.p(), d.p()), g0 = Matrix::Zero(d.p(), d.p());
  for (Index i = 0; i < pop.n(); ++i) {
    const double w1 = t[i] ? 1.0 / pi : 0.0;
    const double w0 = t[i] ? 0.0 : 1.0 / (1.0 - pi);
    const double u = (w1 - 1.0) * (w1 - 1.0);
    const double v = (w0 - 1.0) * (w0 - 1.0);
    out.B_adj += -u * lev(i) * e1(i) + v * lev(i) * e0(i);
    bc1 += (u - n0 / n1 * w1) * lev(i) * e1(i);
    bc0 += (v - n1 / n0 * w0) * lev(i) * e0(i);
    const auto zi = z.row(i).transpose();
    if (t[i]) {
      lz1 += lev(i) * zi;
      ze1 += e1(i) * zi;
      g1 += zi * zi.transpose();
    } else {
      lz0 += lev(i) * zi;
      ze0 += e0(i) * zi;
      g0 += zi * zi.transpose();
    }
  }
  out.B_adj /= n;
  // (n_t^{-1} a)'(n_t^{-1} G)^{-1}(n_t^{-1} b) = a' G^{-1} b / n_t
  const double q1 = lz1.dot(GramFactor(g1).solve(ze1)) / n1;
  const double q0 = lz0.dot(GramFactor(g0).solve(ze0)) / n0;
  out.B_bc = -bc1 / n - n0 / n1 * q1 + bc0 / n + n1 / n0 * q0;
  return out;
}

}  // namespace designbench
