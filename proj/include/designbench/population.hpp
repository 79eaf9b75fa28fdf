#pragma once

// Finite-population data model. Potential outcomes are fixed; the only
// randomness is a complete randomization drawing n1 treated units without
// replacement.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "designbench/errors.hpp"
#include "designbench/linalg.hpp"
#include "designbench/random.hpp"

namespace designbench {

inline constexpr std::uint64_t default_enumeration_cap = 1'000'000;

/// Treatment indicator vector; t[i] is 1 for treated units.
class Assignment {
 public:
  Assignment() = default;

  explicit Assignment(std::vector<std::uint8_t> t) : t_(std::move(t)) {
    for (auto v : t_) {
      if (v > 1) throw invalid_design("assignment entries must be 0 or 1");
      treated_ += v;
    }
  }

  Index size() const { return static_cast<Index>(t_.size()); }
  Index treated() const { return treated_; }
  Index controls() const { return size() - treated_; }
  bool operator[](Index i) const { return t_[static_cast<std::size_t>(i)] != 0; }
  const std::vector<std::uint8_t>& values() const { return t_; }

  /// Indices of units in arm `arm` (1 treated, 0 control), ascending.
  std::vector<Index> units(int arm) const {
    std::vector<Index> out;
    out.reserve(static_cast<std::size_t>(arm ? treated_ : controls()));
    for (Index i = 0; i < size(); ++i) {
      if ((*this)[i] == (arm != 0)) out.push_back(i);
    }
    return out;
  }

  friend bool operator==(const Assignment&, const Assignment&) = default;

 private:
  std::vector<std::uint8_t> t_;
  Index treated_ = 0;
};

inline void check_counts(Index n, Index n1) {
  if (n < 2 || n1 < 1 || n1 > n - 1) {
    throw invalid_design("need 1 <= n1 <= n-1 (got n=" + std::to_string(n) +
                         ", n1=" + std::to_string(n1) + ")");
  }
}

/// Uniform size-n1 subset by partial Fisher-Yates. Position k (k = 0..n1-1) swaps
/// with k + below(n - k); the first n1 slots are the treated units.
inline Assignment sample_assignment(Index n, Index n1, Rng& rng) {
  check_counts(n, n1);
  std::vector<Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Index{0});
  for (Index k = 0; k < n1; ++k) {
    const auto j = k + static_cast<Index>(rng.below(static_cast<std::uint64_t>(n - k)));
    std::swap(idx[static_cast<std::size_t>(k)], idx[static_cast<std::size_t>(j)]);
  }
  std::vector<std::uint8_t> t(static_cast<std::size_t>(n), 0);
  for (Index k = 0; k < n1; ++k) t[static_cast<std::size_t>(idx[static_cast<std::size_t>(k)])] = 1;
  return Assignment(std::move(t));
}

/// C(n, k), saturating at uint64 max.
inline std::uint64_t binomial(std::uint64_t n, std::uint64_t k) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  unsigned __int128 acc = 1;
  for (std::uint64_t i = 1; i <= k; ++i) {
    acc = acc * (n - k + i) / i;
    if (acc > std::numeric_limits<std::uint64_t>::max()) return std::numeric_limits<std::uint64_t>::max();
  }
  return static_cast<std::uint64_t>(acc);
}

/// Streams all C(n, n1) assignments; treated index sets in lexicographic order.
class AssignmentEnumerator {
 public:
  AssignmentEnumerator(Index n, Index n1, std::uint64_t cap = default_enumeration_cap) : n_(n), n1_(n1) {
    check_counts(n, n1);
    count_ = binomial(static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(n1));
    if (count_ > cap) {
      throw too_large("C(" + std::to_string(n) + "," + std::to_string(n1) + ") = " + std::to_string(count_) +
                      " exceeds the enumeration cap " + std::to_string(cap));
    }
    combo_.resize(static_cast<std::size_t>(n1));
    std::iota(combo_.begin(), combo_.end(), Index{0});
  }

  std::uint64_t count() const { return count_; }

  bool next(Assignment& out) {
    if (done_) return false;
    std::vector<std::uint8_t> t(static_cast<std::size_t>(n_), 0);
    for (auto i : combo_) t[static_cast<std::size_t>(i)] = 1;
    out = Assignment(std::move(t));
    advance();
    return true;
  }

 private:
  void advance() {
    Index k = n1_ - 1;
    while (k >= 0 && combo_[static_cast<std::size_t>(k)] == n_ - n1_ + k) --k;
    if (k < 0) {
      done_ = true;
      return;
    }
    ++combo_[static_cast<std::size_t>(k)];
    for (Index j = k + 1; j < n1_; ++j) {
      combo_[static_cast<std::size_t>(j)] = combo_[static_cast<std::size_t>(j - 1)] + 1;
    }
  }

  Index n_;
  Index n1_;
  std::uint64_t count_ = 0;
  std::vector<Index> combo_;
  bool done_ = false;
};

inline AssignmentEnumerator enumerate_assignments(Index n, Index n1,
                                                  std::uint64_t cap = default_enumeration_cap) {
  return AssignmentEnumerator(n, n1, cap);
}

template <typename F>
void for_each_assignment(Index n, Index n1, F&& f, std::uint64_t cap = default_enumeration_cap) {
  auto it = enumerate_assignments(n, n1, cap);
  Assignment a;
  while (it.next(a)) f(a);
}

/// Subtracts column means.
inline Matrix center_columns(const Matrix& x) {
  if (x.rows() == 0 || x.cols() == 0) return x;
  return x.rowwise() - x.colwise().mean();
}

/// Full-sample regression structure shared by every assignment: centered
/// covariates, Z = [1, X], (Z'Z)^{-1}, (Z'Z)^{-1} Z' and the leverages P_ii.
/// Individual P_ij are formed on demand; the n x n projection is never stored.
class Design {
 public:
  explicit Design(const Matrix& covariates)
      : x_(center_columns(covariates)), z_(DesignMatrix::from_covariates(x_)) {
    const Matrix& zv = z_.values();
    if (zv.rows() < zv.cols()) throw singular_gram("fewer units than design columns");
    const GramFactor gram(zv.transpose() * zv);
    solved_ = gram.solve(zv.transpose());
    gram_inverse_ = gram.solve(Matrix::Identity(zv.cols(), zv.cols()));
    leverages_ = (zv.transpose().cwiseProduct(solved_)).colwise().sum().transpose();
  }

  static std::shared_ptr<const Design> make(const Matrix& covariates) {
    return std::make_shared<const Design>(covariates);
  }

  static std::shared_ptr<const Design> intercept_only(Index n) { return make(Matrix(n, 0)); }

  Index n() const { return z_.rows(); }
  Index p() const { return z_.cols(); }
  const Matrix& covariates() const { return x_; }
  const DesignMatrix& z() const { return z_; }
  const Vector& leverages() const { return leverages_; }
  /// (Z'Z)^{-1} Z', p x n.
  const Matrix& solved() const { return solved_; }
  /// (Z'Z)^{-1}, p x p.
  const Matrix& gram_inverse() const { return gram_inverse_; }

  double hat_entry(Index i, Index j) const { return z_.row(i).dot(solved_.col(j)); }

  /// Residuals of the full-sample OLS of y on Z.
  Vector residuals(const Vector& y) const { return y - z_.values() * (solved_ * y); }

 private:
  Matrix x_;
  DesignMatrix z_;
  Matrix solved_;
  Matrix gram_inverse_;
  Vector leverages_;
};

using DesignPtr = std::shared_ptr<const Design>;

/// Fixed potential-outcome table. Covariates are centered on construction.
class FinitePopulation {
 public:
  FinitePopulation(Vector y1, Vector y0, const Matrix& covariates, Index n1)
      : FinitePopulation(std::move(y1), std::move(y0), Design::make(covariates), n1) {}

  FinitePopulation(Vector y1, Vector y0, DesignPtr design, Index n1)
      : y1_(std::move(y1)), y0_(std::move(y0)), design_(std::move(design)), n1_(n1) {
    check_counts(design_->n(), n1_);
    if (y1_.size() != design_->n() || y0_.size() != design_->n()) {
      throw invalid_design("potential outcome vectors must have one entry per unit");
    }
  }

  Index n() const { return design_->n(); }
  Index n1() const { return n1_; }
  Index n0() const { return n() - n1_; }
  Index p() const { return design_->p(); }
  double pi() const { return static_cast<double>(n1_) / static_cast<double>(n()); }
  const Vector& y1() const { return y1_; }
  const Vector& y0() const { return y0_; }
  const Matrix& covariates() const { return design_->covariates(); }
  const DesignPtr& design() const { return design_; }

  double tau() const { return (y1_ - y0_).mean(); }

 private:
  Vector y1_;
  Vector y0_;
  DesignPtr design_;
  Index n1_;
};

/// What a researcher sees: Y_i = y_i(T_i), the assignment, covariates and
/// optional stratum labels.
class ObservedSample {
 public:
  ObservedSample(Vector y, Assignment t, DesignPtr design, std::optional<std::vector<int>> strata = std::nullopt)
      : y_(std::move(y)), t_(std::move(t)), design_(std::move(design)), strata_(std::move(strata)) {
    if (y_.size() != t_.size() || design_->n() != t_.size()) {
      throw invalid_design("outcome, assignment and covariates disagree on n");
    }
    if (strata_) {
      if (static_cast<Index>(strata_->size()) != t_.size()) throw invalid_design("stratum labels must cover every unit");
      check_strata();
    } else if (t_.treated() < 1 || t_.controls() < 1) {
      throw invalid_design("need at least one treated and one control unit");
    }
  }

  ObservedSample(Vector y, Assignment t, const Matrix& covariates,
                 std::optional<std::vector<int>> strata = std::nullopt)
      : ObservedSample(std::move(y), std::move(t), Design::make(covariates), std::move(strata)) {}

  Index n() const { return t_.size(); }
  Index n1() const { return t_.treated(); }
  Index n0() const { return t_.controls(); }
  Index p() const { return design_->p(); }
  double pi() const { return static_cast<double>(n1()) / static_cast<double>(n()); }
  const Vector& y() const { return y_; }
  const Assignment& t() const { return t_; }
  const DesignPtr& design() const { return design_; }
  const std::optional<std::vector<int>>& strata() const { return strata_; }

 private:
  void check_strata() const {
    std::vector<std::pair<int, std::pair<Index, Index>>> counts;
    for (Index i = 0; i < n(); ++i) {
      const int s = (*strata_)[static_cast<std::size_t>(i)];
      auto it = std::find_if(counts.begin(), counts.end(), [s](const auto& c) { return c.first == s; });
      if (it == counts.end()) {
        counts.push_back({s, {0, 0}});
        it = std::prev(counts.end());
      }
      (t_[i] ? it->second.first : it->second.second) += 1;
    }
    for (const auto& [s, c] : counts) {
      if (c.first < 1 || c.second < 1) {
        throw invalid_design("stratum " + std::to_string(s) + " needs at least one treated and one control unit");
      }
    }
  }

  Vector y_;
  Assignment t_;
  DesignPtr design_;
  std::optional<std::vector<int>> strata_;
};

/// Observed outcomes of a population under an assignment.
inline ObservedSample observe(const FinitePopulation& pop, const Assignment& t) {
  if (t.size() != pop.n() || t.treated() != pop.n1()) throw invalid_design("assignment does not match population");
  Vector y(pop.n());
  for (Index i = 0; i < pop.n(); ++i) y(i) = t[i] ? pop.y1()(i) : pop.y0()(i);
  return ObservedSample(std::move(y), t, pop.design());
}

/// e(t) = Y(t) - Z beta_t over the whole population.
inline std::pair<Vector, Vector> population_residuals(const FinitePopulation& pop) {
  return {pop.design()->residuals(pop.y1()), pop.design()->residuals(pop.y0())};
}

struct PopulationDiagnostics {
  double kappa = 0.0;
  double E2 = 0.0;
  double Einf = 0.0;
  // NaN when either residual vector is identically zero.
  double residual_correlation = 0.0;
};

/// Reports the regularity quantities; nothing is enforced.
inline PopulationDiagnostics diagnostics(const FinitePopulation& pop) {
  const auto [e1, e0] = population_residuals(pop);
  const double n = static_cast<double>(pop.n());
  PopulationDiagnostics d;
  d.kappa = pop.design()->leverages().maxCoeff();
  d.E2 = std::max(e1.squaredNorm(), e0.squaredNorm()) / n;
  d.Einf = std::max(e1.cwiseAbs().maxCoeff(), e0.cwiseAbs().maxCoeff());
  const double denom = std::sqrt(e1.squaredNorm() * e0.squaredNorm());
  d.residual_correlation = denom > 0.0 ? std::clamp(e1.dot(e0) / denom, -1.0, 1.0)
                                       : std::numeric_limits<double>::quiet_NaN();
  return d;
}

}  // namespace designbench
