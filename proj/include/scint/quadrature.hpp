#pragma once

// Deterministic and Monte-Carlo engines for N-dimensional integration over a
// box, with error control and reproducible parallelism. Estimates depend only
// on (method, seed, max_evals, domain), never on the worker count: samples
// are indexed by a counter-based generator and partial sums are combined in a
// fixed block order.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <queue>
#include <stdexcept>
#include <vector>

#include "scint/support/gauss_kronrod.hpp"
#include "scint/support/parallel.hpp"
#include "scint/support/philox.hpp"
#include "scint/support/sobol.hpp"

namespace scint {

enum class IntegrationMethod { AdaptiveProduct, QuasiMonteCarlo, MonteCarlo };

struct IntegrationConfig {
  IntegrationMethod method = IntegrationMethod::AdaptiveProduct;
  double rel_tol = 1e-2;
  double abs_tol = 0.0;
  std::int64_t max_evals = 2'000'000;
  double truncation_sigmas = 6.0;  ///< Gaussian-domain cutoff, units of each variable's width
  std::uint64_t seed = 0;
  int workers = 0;  ///< 0 = SCINT_WORKERS env var, else hardware concurrency

  void validate() const {
    if (!(rel_tol > 0.0)) throw std::domain_error("integration.rel_tol must be > 0");
    if (!(abs_tol >= 0.0)) throw std::domain_error("integration.abs_tol must be >= 0");
    if (!(truncation_sigmas >= 4.0)) throw std::domain_error("integration.truncation_sigmas must be >= 4");
    if (max_evals < 1000) throw std::domain_error("integration.max_evals must be >= 1000");
  }
};

struct IntegralResult {
  double estimate = 0.0;
  double error_estimate = 0.0;
  std::int64_t evals = 0;
  bool converged = false;
};

using Integrand = std::function<double(const double*)>;

namespace detail {

// ---------------------------------------------------------------------------
// Genz-Malik degree-7 rule with adaptive region subdivision (the standard
// cubature rule for 2 <= N <= 13), largest-error-first with deterministic
// tie-breaking.
// ---------------------------------------------------------------------------

struct GmRule {
  int n;
  double w[5];   // weights of the five generator groups (fullsym sets)
  double wd[4];  // degree-5 embedded weights for the error estimate
  static constexpr double l2 = 0.358568582800318073;  // sqrt(9/70)
  static constexpr double l3 = 0.948683298050513800;  // sqrt(9/10)
  static constexpr double l4 = 0.948683298050513800;  // sqrt(9/10)
  static constexpr double l5 = 0.688247201611685289;  // sqrt(9/19)

  explicit GmRule(int dim) : n(dim) {
    const double n_ = dim;
    w[0] = (12824.0 - 9120.0 * n_ + 400.0 * n_ * n_) / 19683.0;
    w[1] = 980.0 / 6561.0;
    w[2] = (1820.0 - 400.0 * n_) / 19683.0;
    w[3] = 200.0 / 19683.0;
    w[4] = 6859.0 / 19683.0 / std::pow(2.0, dim);
    wd[0] = (729.0 - 950.0 * n_ + 50.0 * n_ * n_) / 729.0;
    wd[1] = 245.0 / 486.0;
    wd[2] = (265.0 - 100.0 * n_) / 1458.0;
    wd[3] = 25.0 / 729.0;
  }

  std::int64_t points_per_call() const {
    return 1 + 4 * static_cast<std::int64_t>(n) + 2 * static_cast<std::int64_t>(n) * (n - 1) +
           (std::int64_t{1} << n);
  }

  /// Evaluates the rule on the box [c - h, c + h]; returns (value, error) and
  /// the coordinate with the largest fourth-difference (suggested split axis).
  void apply(const Integrand& f, const std::vector<double>& c, const std::vector<double>& h,
             double& value, double& error, int& split_dim) const {
    std::vector<double> x(c.begin(), c.end());
    double vol = 1.0;
    for (int i = 0; i < n; ++i) vol *= 2.0 * h[static_cast<std::size_t>(i)];

    const double f0 = f(x.data());
    double sum2 = 0.0, sum3 = 0.0, sum4 = 0.0, sum5 = 0.0;
    double best_fourth = -1.0;
    split_dim = 0;

    for (int i = 0; i < n; ++i) {
      const double hi = h[static_cast<std::size_t>(i)];
      const double ci = c[static_cast<std::size_t>(i)];
      x[static_cast<std::size_t>(i)] = ci - l2 * hi;
      const double f2m = f(x.data());
      x[static_cast<std::size_t>(i)] = ci + l2 * hi;
      const double f2p = f(x.data());
      x[static_cast<std::size_t>(i)] = ci - l3 * hi;
      const double f3m = f(x.data());
      x[static_cast<std::size_t>(i)] = ci + l3 * hi;
      const double f3p = f(x.data());
      x[static_cast<std::size_t>(i)] = ci;
      sum2 += f2m + f2p;
      sum3 += f3m + f3p;
      // Fourth divided difference along axis i (split-axis heuristic).
      const double fourth = std::abs(f2m + f2p - 2.0 * f0 - (l2 * l2 / (l3 * l3)) * (f3m + f3p - 2.0 * f0));
      if (fourth > best_fourth) {
        best_fourth = fourth;
        split_dim = i;
      }
    }
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) {
        const double ci = c[static_cast<std::size_t>(i)], cj = c[static_cast<std::size_t>(j)];
        const double hi = h[static_cast<std::size_t>(i)], hj = h[static_cast<std::size_t>(j)];
        for (int si = -1; si <= 1; si += 2) {
          for (int sj = -1; sj <= 1; sj += 2) {
            x[static_cast<std::size_t>(i)] = ci + si * l4 * hi;
            x[static_cast<std::size_t>(j)] = cj + sj * l4 * hj;
            sum4 += f(x.data());
          }
        }
        x[static_cast<std::size_t>(i)] = ci;
        x[static_cast<std::size_t>(j)] = cj;
      }
    }
    for (std::int64_t corner = 0; corner < (std::int64_t{1} << n); ++corner) {
      for (int i = 0; i < n; ++i)
        x[static_cast<std::size_t>(i)] = c[static_cast<std::size_t>(i)] +
                                         (((corner >> i) & 1) ? 1.0 : -1.0) * l5 * h[static_cast<std::size_t>(i)];
      sum5 += f(x.data());
    }

    // Weights are normalized to the unit box of volume 2^n; vol carries the
    // rest. The corner group's 2^-n is folded into w[4] at construction.
    value = vol * (w[0] * f0 + w[1] * sum2 + w[2] * sum3 + w[3] * sum4 + w[4] * sum5);
    const double value5 = vol * (wd[0] * f0 + wd[1] * sum2 + wd[2] * sum3 + wd[3] * sum4);
    error = std::abs(value - value5);
  }
};

struct GmRegion {
  std::vector<double> c, h;
  double value = 0.0;
  double error = 0.0;
  int split_dim = 0;
  std::uint64_t id = 0;  // deterministic tie-break
};

inline IntegralResult integrate_genz_malik(const Integrand& f, const std::vector<std::array<double, 2>>& domain,
                                           const IntegrationConfig& cfg) {
  const int n = static_cast<int>(domain.size());
  const GmRule rule(n);
  auto cmp = [](const GmRegion& a, const GmRegion& b) {
    if (a.error != b.error) return a.error < b.error;
    return a.id > b.id;
  };
  std::priority_queue<GmRegion, std::vector<GmRegion>, decltype(cmp)> heap(cmp);

  GmRegion whole;
  whole.c.resize(static_cast<std::size_t>(n));
  whole.h.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    whole.c[static_cast<std::size_t>(i)] = 0.5 * (domain[static_cast<std::size_t>(i)][0] + domain[static_cast<std::size_t>(i)][1]);
    whole.h[static_cast<std::size_t>(i)] = 0.5 * (domain[static_cast<std::size_t>(i)][1] - domain[static_cast<std::size_t>(i)][0]);
  }
  IntegralResult res;
  rule.apply(f, whole.c, whole.h, whole.value, whole.error, whole.split_dim);
  res.evals += rule.points_per_call();
  whole.id = 0;
  double total = whole.value;
  double total_err = whole.error;
  heap.push(std::move(whole));
  std::uint64_t next_id = 1;

  while (total_err > std::max(cfg.abs_tol, cfg.rel_tol * std::abs(total)) &&
         res.evals + 2 * rule.points_per_call() <= cfg.max_evals) {
    GmRegion top = heap.top();
    heap.pop();
    total -= top.value;
    total_err -= top.error;
    const int d = top.split_dim;
    GmRegion left = top, right = top;
    left.h[static_cast<std::size_t>(d)] *= 0.5;
    right.h[static_cast<std::size_t>(d)] *= 0.5;
    left.c[static_cast<std::size_t>(d)] -= left.h[static_cast<std::size_t>(d)];
    right.c[static_cast<std::size_t>(d)] += right.h[static_cast<std::size_t>(d)];
    for (GmRegion* r : {&left, &right}) {
      rule.apply(f, r->c, r->h, r->value, r->error, r->split_dim);
      res.evals += rule.points_per_call();
      r->id = next_id++;
      total += r->value;
      total_err += r->error;
    }
    heap.push(std::move(left));
    heap.push(std::move(right));
  }

  // Recompute the totals in deterministic (id) order to avoid accumulation
  // drift from the incremental updates above.
  std::vector<GmRegion> regions;
  regions.reserve(heap.size());
  while (!heap.empty()) {
    regions.push_back(heap.top());
    heap.pop();
  }
  std::sort(regions.begin(), regions.end(), [](const GmRegion& a, const GmRegion& b) { return a.id < b.id; });
  total = 0.0;
  total_err = 0.0;
  for (const auto& r : regions) {
    total += r.value;
    total_err += r.error;
  }

  res.estimate = total;
  res.error_estimate = total_err;
  res.converged = total_err <= std::max(cfg.abs_tol, cfg.rel_tol * std::abs(total));
  return res;
}

// ---------------------------------------------------------------------------
// Sample-based engines. Points are indexed i -> x_i; blocks of fixed size are
// evaluated in parallel and reduced in block order.
// ---------------------------------------------------------------------------

inline constexpr std::int64_t kSampleBlock = 8192;

template <typename PointGen>
IntegralResult integrate_sampling(const Integrand& f, const std::vector<std::array<double, 2>>& domain,
                                  const IntegrationConfig& cfg, PointGen&& gen, int n_replicates) {
  const int n = static_cast<int>(domain.size());
  double vol = 1.0;
  for (const auto& ab : domain) vol *= ab[1] - ab[0];

  IntegralResult res;
  // Replicate partial sums: MC uses n_replicates = 1 (plain variance);
  // randomized QMC uses shifted replicates for the error estimate.
  std::vector<double> rep_sum(static_cast<std::size_t>(n_replicates), 0.0);
  std::vector<double> rep_sumsq(static_cast<std::size_t>(n_replicates), 0.0);
  std::int64_t n_done = 0;

  const std::int64_t max_points = cfg.max_evals;
  std::int64_t target = std::min<std::int64_t>(std::max<std::int64_t>(cfg.max_evals / 64, 16 * kSampleBlock), max_points);

  while (true) {
    const std::int64_t n_new = target - n_done;
    const std::int64_t n_blocks = (n_new + kSampleBlock - 1) / kSampleBlock;
    struct BlockSum {
      std::vector<double> s, s2;
    };
    std::vector<BlockSum> partial(static_cast<std::size_t>(n_blocks));
    parallel_for(n_blocks, cfg.workers, [&](std::int64_t blk) {
      BlockSum& out = partial[static_cast<std::size_t>(blk)];
      out.s.assign(static_cast<std::size_t>(n_replicates), 0.0);
      out.s2.assign(static_cast<std::size_t>(n_replicates), 0.0);
      std::vector<double> u(static_cast<std::size_t>(n));
      std::vector<double> x(static_cast<std::size_t>(n));
      const std::int64_t lo = n_done + blk * kSampleBlock;
      const std::int64_t hi = std::min(n_done + n_new, lo + kSampleBlock);
      for (std::int64_t i = lo; i < hi; ++i) {
        const int rep = static_cast<int>(i % n_replicates);
        gen(i, rep, u.data());
        for (int d = 0; d < n; ++d)
          x[static_cast<std::size_t>(d)] = domain[static_cast<std::size_t>(d)][0] +
                                           u[static_cast<std::size_t>(d)] * (domain[static_cast<std::size_t>(d)][1] - domain[static_cast<std::size_t>(d)][0]);
        const double v = f(x.data());
        out.s[static_cast<std::size_t>(rep)] += v;
        out.s2[static_cast<std::size_t>(rep)] += v * v;
      }
    });
    for (const auto& b : partial) {
      for (int r = 0; r < n_replicates; ++r) {
        rep_sum[static_cast<std::size_t>(r)] += b.s[static_cast<std::size_t>(r)];
        rep_sumsq[static_cast<std::size_t>(r)] += b.s2[static_cast<std::size_t>(r)];
      }
    }
    n_done = target;

    // Estimate + error.
    if (n_replicates == 1) {
      const double mean = rep_sum[0] / static_cast<double>(n_done);
      const double var = std::max(0.0, rep_sumsq[0] / static_cast<double>(n_done) - mean * mean);
      res.estimate = vol * mean;
      res.error_estimate = vol * std::sqrt(var / static_cast<double>(n_done));
    } else {
      // Each replicate integrates ~n_done / R points of its own shifted net.
      double mean = 0.0;
      std::vector<double> rep_mean(static_cast<std::size_t>(n_replicates));
      for (int r = 0; r < n_replicates; ++r) {
        const double cnt = std::floor((static_cast<double>(n_done) - r - 1) / n_replicates) + 1;
        rep_mean[static_cast<std::size_t>(r)] = rep_sum[static_cast<std::size_t>(r)] / cnt;
        mean += rep_mean[static_cast<std::size_t>(r)];
      }
      mean /= n_replicates;
      double var = 0.0;
      for (int r = 0; r < n_replicates; ++r) {
        const double d = rep_mean[static_cast<std::size_t>(r)] - mean;
        var += d * d;
      }
      var /= (n_replicates - 1.0) * n_replicates;
      res.estimate = vol * mean;
      res.error_estimate = vol * std::sqrt(var);
    }
    res.evals = n_done;
    if (res.error_estimate <= std::max(cfg.abs_tol, cfg.rel_tol * std::abs(res.estimate))) {
      res.converged = true;
      return res;
    }
    if (n_done >= max_points) {
      res.converged = false;
      return res;
    }
    target = std::min(max_points, 2 * n_done);
  }
}

}  // namespace detail

/// Integrates a pure callback over an N-dimensional box (N <= 13).
inline IntegralResult integrate(const Integrand& f, const std::vector<std::array<double, 2>>& domain,
                                const IntegrationConfig& cfg) {
  cfg.validate();
  const int n = static_cast<int>(domain.size());
  if (n < 1 || n > 13) throw std::invalid_argument("integrate: dimension must be in [1,13]");
  for (const auto& ab : domain) {
    if (!std::isfinite(ab[0]) || !std::isfinite(ab[1]))
      throw std::invalid_argument("integrate: bounds must be finite (pre-truncate Gaussian directions)");
  }

  switch (cfg.method) {
    case IntegrationMethod::AdaptiveProduct: {
      if (n == 1) {
        IntegralResult res;
        double out = 0.0;
        GkStatus st = integrate_gk15_vec([&](double x, double* o) { o[0] = f(&x); }, domain[0][0], domain[0][1],
                                         1, &out, cfg.rel_tol, cfg.abs_tol,
                                         static_cast<std::size_t>(cfg.max_evals / 15));
        res.estimate = out;
        res.error_estimate = st.error;
        res.evals = static_cast<std::int64_t>(st.evals);
        res.converged = st.converged && st.error <= std::max(cfg.abs_tol, cfg.rel_tol * std::abs(out));
        return res;
      }
      return detail::integrate_genz_malik(f, domain, cfg);
    }
    case IntegrationMethod::QuasiMonteCarlo: {
      const int reps = 8;  // Cranley-Patterson shifted replicates
      Sobol sobol(n);
      Philox4x32 rng(cfg.seed);
      std::vector<double> shifts(static_cast<std::size_t>(reps * n));
      for (int r = 0; r < reps; ++r)
        for (int d = 0; d < n; ++d)
          shifts[static_cast<std::size_t>(r * n + d)] = rng.uniform2(0xC0FFEEull + static_cast<std::uint64_t>(r),
                                                                    static_cast<std::uint64_t>(d))[0];
      auto gen = [&, n](std::int64_t i, int rep, double* u) {
        sobol.point(static_cast<std::uint64_t>(i / reps) + 1, u);  // skip index 0 (origin)
        for (int d = 0; d < n; ++d) {
          u[d] += shifts[static_cast<std::size_t>(rep * n + d)];
          if (u[d] >= 1.0) u[d] -= 1.0;
        }
      };
      return detail::integrate_sampling(f, domain, cfg, gen, reps);
    }
    case IntegrationMethod::MonteCarlo: {
      Philox4x32 rng(cfg.seed);
      const int n2 = (n + 1) / 2;
      auto gen = [&, n, n2](std::int64_t i, int, double* u) {
        for (int pair = 0; pair < n2; ++pair) {
          const auto uv = rng.uniform2(static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(pair));
          u[2 * pair] = uv[0];
          if (2 * pair + 1 < n) u[2 * pair + 1] = uv[1];
        }
      };
      return detail::integrate_sampling(f, domain, cfg, gen, 1);
    }
  }
  throw std::logic_error("integrate: unknown method");
}

}  // namespace scint
