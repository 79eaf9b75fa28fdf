#pragma once

// Monte Carlo protocol: fixed t(df) covariate bank and coefficient vector,
// worst-case or normal errors, repeated complete randomizations, and the
// bias / SD / coverage summaries.
//
// Seed-stream layout (all streams derived from master_seed):
//   covariate column k : Rng::derive(seed, {1, k}), n draws of t(df), row order
//   coefficients b     : Rng::derive(seed, {2}), standard normals, b_1 first
//   normal errors      : Rng::derive(seed, {3}), n standard normals
//   replication r at p : Rng::derive(seed, {4, p, r}), one partial Fisher-Yates
// Only n x max(p_grid) covariates are drawn; each column has its own stream, so
// the p-column design is a prefix of any wider one.

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "designbench/errors.hpp"
#include "designbench/estimators.hpp"
#include "designbench/linalg.hpp"
#include "designbench/population.hpp"
#include "designbench/random.hpp"
#include "designbench/theory.hpp"
#include "designbench/variance.hpp"

namespace designbench {

// `zero` removes the errors entirely (outcomes exactly linear); a diagnostic hook.
enum class ErrorKind { worst, normal, zero };

inline std::string_view to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::worst: return "worst";
    case ErrorKind::normal: return "normal";
    case ErrorKind::zero: return "zero";
  }
  return "?";
}

inline ErrorKind parse_error_kind(std::string_view s) {
  if (s == "worst") return ErrorKind::worst;
  if (s == "normal") return ErrorKind::normal;
  if (s == "zero") return ErrorKind::zero;
  throw parse_error("unknown error_kind '" + std::string(s) + "' (expected worst or normal)");
}

struct SimConfig {
  Index n = 500;
  double pi1 = 0.2;
  std::vector<Index> p_grid = {5, 10, 15, 20, 25, 30, 35, 40, 45, 50, 55, 60, 65, 70, 75};
  int df = 3;
  ErrorKind error_kind = ErrorKind::worst;
  Index reps = 10000;
  std::uint64_t master_seed = 1;
  std::vector<EstimatorId> estimators = {EstimatorId::adj, EstimatorId::bc, EstimatorId::cf, EstimatorId::unbiased};
  std::vector<VarianceMethod> se_methods = {VarianceMethod::hc0, VarianceMethod::hc2, VarianceMethod::hc3,
                                            VarianceMethod::dbhc3};
  double ci_level = 0.95;

  Index n1() const { return static_cast<Index>(std::llround(static_cast<double>(n) * pi1)); }
  Index n0() const { return n - n1(); }

  std::string design_name() const { return std::string(to_string(error_kind)) + "_t" + std::to_string(df); }

  void validate() const {
    if (n < 4) throw invalid_design("n must be at least 4");
    if (!(pi1 > 0.0 && pi1 < 1.0)) throw invalid_design("pi1 must lie in (0, 1)");
    if (std::abs(static_cast<double>(n) * pi1 - static_cast<double>(n1())) > 1e-9) {
      throw invalid_design("n * pi1 must be an integer");
    }
    check_counts(n, n1());
    if (reps < 1) throw invalid_design("reps must be positive");
    if (df < 1) throw invalid_design("df must be a positive integer");
    if (p_grid.empty()) throw invalid_design("p_grid is empty");
    for (auto p : p_grid) {
      if (p < 1) throw invalid_design("every p must be >= 1");
      if (p >= std::min(n1(), n0()) - 1) {
        throw invalid_design("p=" + std::to_string(p) + " must be below min(n1, n0) - 1");
      }
    }
    if (estimators.empty()) throw invalid_design("no estimators requested");
    if (!(ci_level > 0.0 && ci_level < 1.0)) throw invalid_design("ci_level must lie in (0, 1)");
  }
};

/// Raw draws shared by every p: covariates (n x width), b and normal errors.
struct DgpBank {
  Matrix covariates;
  Vector coefficients;
  Vector normal_errors;

  DgpBank(const SimConfig& cfg, Index width) : covariates(cfg.n, width), coefficients(width), normal_errors(cfg.n) {
    for (Index k = 0; k < width; ++k) {
      Rng rng = Rng::derive(cfg.master_seed, {1, static_cast<std::uint64_t>(k)});
      for (Index i = 0; i < cfg.n; ++i) covariates(i, k) = rng.student_t(cfg.df);
    }
    Rng brng = Rng::derive(cfg.master_seed, {2});
    for (Index k = 0; k < width; ++k) coefficients(k) = brng.normal();
    Rng erng = Rng::derive(cfg.master_seed, {3});
    for (Index i = 0; i < cfg.n; ++i) normal_errors(i) = erng.normal();
  }
};

/// eps maximizing |d' eps| over eps'eps/n = 1 and eps orthogonal to [1, X], where d
/// holds the leverages: eps* = sqrt(n) (I - P) d / ||(I - P) d||. This maximizes the
/// leading adjusted-estimator bias |(n1/n0) Delta_0 - (n0/n1) Delta_1| with
/// eps(0) = eps, eps(1) = 2 eps for any arm sizes, since the objective is |c| |d'eps| / n.
inline Vector worst_case_errors(const Matrix& covariates) {
  const Design design(covariates);
  const Vector& d = design.leverages();
  const Vector r = design.residuals(d);
  const double norm = r.norm();
  if (norm <= 1e-12) throw degenerate_objective("leverages are constant; worst-case objective is identically zero");
  return std::sqrt(static_cast<double>(covariates.rows())) * r / norm;
}

/// |(n1/n0) Delta_0 - (n0/n1) Delta_1| for errors eps(0) = eps, eps(1) = 2 eps.
inline double worst_case_objective(const Matrix& covariates, Index n1, const Vector& eps) {
  const Design design(covariates);
  const double n = static_cast<double>(covariates.rows());
  const double m1 = static_cast<double>(n1);
  const double m0 = n - m1;
  const Vector e = design.residuals(eps);
  const double delta0 = design.leverages().dot(e) / n;
  const double delta1 = design.leverages().dot(2.0 * e) / n;
  return std::abs(m1 / m0 * delta0 - m0 / m1 * delta1);
}

inline FinitePopulation build_population(const SimConfig& cfg, const DgpBank& bank, Index p) {
  if (p < 1 || p > bank.covariates.cols()) throw invalid_design("p outside the generated covariate bank");
  const Matrix x = bank.covariates.leftCols(p);
  const Vector signal = x * bank.coefficients.head(p);
  Vector eps1, eps0;
  switch (cfg.error_kind) {
    case ErrorKind::worst: {
      const Vector eps = worst_case_errors(x);
      eps0 = eps;
      eps1 = 2.0 * eps;
      break;
    }
    case ErrorKind::normal:
      eps0 = bank.normal_errors;
      eps1 = bank.normal_errors;
      break;
    case ErrorKind::zero:
      eps0 = Vector::Zero(cfg.n);
      eps1 = Vector::Zero(cfg.n);
      break;
  }
  return FinitePopulation(signal + eps1, signal + eps0, x, cfg.n1());
}

inline FinitePopulation build_dgp(const SimConfig& cfg, Index p) {
  if (p < 1) throw invalid_design("p must be >= 1");
  check_counts(cfg.n, cfg.n1());
  return build_population(cfg, DgpBank(cfg, p), p);
}

struct SimRow {
  std::string design;
  int df = 0;
  ErrorKind error_kind = ErrorKind::worst;
  Index p = 0;
  EstimatorId estimator = EstimatorId::adj;
  std::optional<VarianceMethod> se_method;
  double bias = 0.0;
  std::optional<double> relative_bias;
  double sd = 0.0;
  std::optional<double> sd_ratio_vs_cf;
  std::optional<double> coverage;
  std::optional<double> mean_se;
  Index failures = 0;
  Index reps = 0;
};

struct SimPopulationInfo {
  Index p = 0;
  double tau = 0.0;
  double sigma_L2 = 0.0;
  double sigma_W2 = 0.0;
};

struct SimResult {
  SimConfig config;
  std::vector<SimPopulationInfo> populations;
  std::vector<SimRow> rows;
};

namespace detail {

// Neumaier compensated sum.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      carry_ += (sum_ - t) + x;
    } else {
      carry_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + carry_; }

 private:
  double sum_ = 0.0;
  double carry_ = 0.0;
};

inline constexpr double nan = std::numeric_limits<double>::quiet_NaN();

struct RepRecord {
  std::vector<double> tau_hat;  // per estimator; NaN on failure
  std::vector<double> se;       // per (estimator, method); NaN on failure
  std::vector<std::uint8_t> hit;
};

template <typename F>
void parallel_for(Index count, unsigned threads, F&& body) {
  threads = std::max(1u, threads);
  if (threads == 1 || count < 2) {
    for (Index r = 0; r < count; ++r) body(r);
    return;
  }
  std::atomic<Index> next{0};
  std::vector<std::thread> pool;
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
  for (unsigned w = 0; w < threads; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const Index r = next.fetch_add(1);
        if (r >= count || failed.load()) return;
        try {
          body(r);
        } catch (...) {
          if (!failed.exchange(true)) failure = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace detail

/// Runs every (p, replication). Results are a pure function of cfg: replication r
/// at p draws from its own stream and aggregation runs in replication order.
inline SimResult run_monte_carlo(const SimConfig& cfg, unsigned threads = 1) {
  cfg.validate();
  const Index width = *std::max_element(cfg.p_grid.begin(), cfg.p_grid.end());
  const DgpBank bank(cfg, width);
  const auto ne = cfg.estimators.size();
  const auto nm = cfg.se_methods.size();
  const double crit = normal_critical_value(cfg.ci_level);
  const bool want_dif = std::find(cfg.estimators.begin(), cfg.estimators.end(), EstimatorId::dif) != cfg.estimators.end();

  SimResult result;
  result.config = cfg;
  for (Index p : cfg.p_grid) {
    const FinitePopulation pop = build_population(cfg, bank, p);
    const double tau = pop.tau();
    const double sl2 = sigma_L2(pop);
    result.populations.push_back({p, tau, sl2, sigma_W2(pop)});
    const DesignPtr plain = want_dif ? Design::intercept_only(cfg.n) : nullptr;

    std::vector<detail::RepRecord> records(static_cast<std::size_t>(cfg.reps));
    detail::parallel_for(cfg.reps, threads, [&](Index r) {
      Rng rng = Rng::derive(cfg.master_seed, {4, static_cast<std::uint64_t>(p), static_cast<std::uint64_t>(r)});
      const Assignment t = sample_assignment(cfg.n, cfg.n1(), rng);
      const ObservedSample s = observe(pop, t);
      auto& rec = records[static_cast<std::size_t>(r)];
      rec.tau_hat.assign(ne, detail::nan);
      rec.se.assign(ne * nm, detail::nan);
      rec.hit.assign(ne * nm, 0);

      std::optional<SampleFits> fits;
      try {
        fits.emplace(s);
      } catch (const singular_gram&) {
      } catch (const leverage_one&) {
      }
      // variance reports depend on the sample, not the estimator
      std::vector<std::optional<VarianceReport>> reports(nm);
      if (fits) {
        for (std::size_t m = 0; m < nm; ++m) {
          try {
            reports[m] = variance(cfg.se_methods[m], s, *fits);
          } catch (const singular_gram&) {
          } catch (const leverage_one&) {
          }
        }
      }
      std::optional<ObservedSample> plain_sample;
      std::optional<SampleFits> plain_fits;
      for (std::size_t k = 0; k < ne; ++k) {
        const EstimatorId id = cfg.estimators[k];
        const ObservedSample* sk = &s;
        const SampleFits* fk = fits ? &*fits : nullptr;
        if (id == EstimatorId::dif) {
          if (!plain_sample) {
            plain_sample.emplace(s.y(), s.t(), plain);
            plain_fits.emplace(*plain_sample);
          }
          sk = &*plain_sample;
          fk = &*plain_fits;
        }
        if (!fk) continue;
        try {
          rec.tau_hat[k] = estimate(id, *sk, *fk).tau_hat;
        } catch (const singular_gram&) {
          continue;
        } catch (const leverage_one&) {
          continue;
        }
        for (std::size_t m = 0; m < nm; ++m) {
          std::optional<VarianceReport> vr;
          if (id == EstimatorId::dif) {
            try {
              vr = variance(cfg.se_methods[m], *sk, *fk);
            } catch (const error&) {
            }
          } else {
            vr = reports[m];
          }
          if (!vr) continue;
          const double half = crit * vr->se;
          // absolute slack so exact-fit designs (se = 0, tau_hat = tau up to rounding) count as covered
          const double slack = 1e-9 * (1.0 + std::abs(tau));
          rec.se[k * nm + m] = vr->se;
          rec.hit[k * nm + m] = std::abs(rec.tau_hat[k] - tau) <= half + slack ? 1 : 0;
        }
      }
    });

    // aggregate in replication order
    std::vector<double> bias(ne), sd(ne);
    std::vector<Index> ok(ne);
    for (std::size_t k = 0; k < ne; ++k) {
      detail::CompensatedSum sum;
      for (const auto& rec : records) {
        if (!std::isnan(rec.tau_hat[k])) {
          sum.add(rec.tau_hat[k] - tau);
          ++ok[k];
        }
      }
      bias[k] = ok[k] ? sum.value() / static_cast<double>(ok[k]) : detail::nan;
      detail::CompensatedSum dev;
      for (const auto& rec : records) {
        if (!std::isnan(rec.tau_hat[k])) {
          const double d = rec.tau_hat[k] - tau - bias[k];
          dev.add(d * d);
        }
      }
      sd[k] = ok[k] > 1 ? std::sqrt(dev.value() / static_cast<double>(ok[k] - 1)) : detail::nan;
    }
    std::optional<double> sd_cf;
    for (std::size_t k = 0; k < ne; ++k) {
      if (cfg.estimators[k] == EstimatorId::cf) sd_cf = sd[k];
    }
    // Values at roundoff level of the outcome scale count as zero.
    const double floor = 1e-20 * (pop.y1().squaredNorm() + pop.y0().squaredNorm()) / static_cast<double>(cfg.n);
    const std::optional<double> sigma_l = sl2 > floor ? std::optional<double>(std::sqrt(sl2)) : std::nullopt;

    for (std::size_t k = 0; k < ne; ++k) {
      SimRow base;
      base.design = cfg.design_name();
      base.df = cfg.df;
      base.error_kind = cfg.error_kind;
      base.p = p;
      base.estimator = cfg.estimators[k];
      base.bias = bias[k];
      if (sigma_l) base.relative_bias = bias[k] / *sigma_l;
      base.sd = sd[k];
      if (sd_cf && *sd_cf > 0.0) base.sd_ratio_vs_cf = sd[k] / *sd_cf;
      base.reps = cfg.reps;
      if (nm == 0) {
        base.failures = cfg.reps - ok[k];
        result.rows.push_back(base);
        continue;
      }
      for (std::size_t m = 0; m < nm; ++m) {
        SimRow row = base;
        row.se_method = cfg.se_methods[m];
        Index valid = 0, hits = 0;
        detail::CompensatedSum se_sum;
        for (const auto& rec : records) {
          const double se = rec.se[k * nm + m];
          if (std::isnan(se)) continue;
          ++valid;
          hits += rec.hit[k * nm + m];
          se_sum.add(se);
        }
        row.failures = cfg.reps - valid;
        if (valid) {
          row.coverage = static_cast<double>(hits) / static_cast<double>(valid);
          row.mean_se = se_sum.value() / static_cast<double>(valid);
        }
        result.rows.push_back(row);
      }
    }
  }
  return result;
}

}  // namespace designbench
