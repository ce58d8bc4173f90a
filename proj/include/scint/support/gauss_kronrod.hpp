#pragma once

// Adaptive Gauss-Kronrod (15-point) quadrature for scalar- and vector-valued
// integrands. Deterministic: subdivision order depends only on the integrand.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

namespace scint {

namespace gk {

// QUADPACK dqk15 abscissae/weights on [-1, 1].
inline constexpr std::array<double, 8> kNodes = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144838258730, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
inline constexpr std::array<double, 8> kWeightK = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
inline constexpr std::array<double, 4> kWeightG = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

}  // namespace gk

struct GkStatus {
  double error = 0.0;     ///< accumulated absolute error estimate
  std::size_t evals = 0;  ///< integrand evaluations
  bool converged = true;  ///< false if the interval budget ran out
};

/// Integrates f(x, out[nout]) over [a, b]. Accepts a subinterval when its
/// Kronrod-Gauss error estimate (max over components, scaled per component)
/// fits its proportional share of the tolerance.
template <typename Fn>
GkStatus integrate_gk15_vec(Fn&& f, double a, double b, int nout, double* result, double rel_tol,
                            double abs_tol, std::size_t max_intervals = 4000) {
  struct Seg {
    double a, b;
    std::vector<double> valk;  // Kronrod estimate per component
    double err;                // worst-component error estimate
  };

  std::vector<double> fval(static_cast<std::size_t>(nout));
  std::vector<double> sumk(static_cast<std::size_t>(nout));
  std::vector<double> sumg(static_cast<std::size_t>(nout));
  GkStatus status;

  auto eval_seg = [&](double lo, double hi) {
    Seg s;
    s.a = lo;
    s.b = hi;
    s.valk.assign(static_cast<std::size_t>(nout), 0.0);
    std::fill(sumg.begin(), sumg.end(), 0.0);
    const double c = 0.5 * (lo + hi);
    const double h = 0.5 * (hi - lo);
    for (int i = 0; i < 8; ++i) {
      const int nrep = (i == 7) ? 1 : 2;
      for (int rep = 0; rep < nrep; ++rep) {
        const double x = c + (rep == 0 ? -1.0 : 1.0) * h * gk::kNodes[i];
        f(x, fval.data());
        ++status.evals;
        for (int k = 0; k < nout; ++k) {
          s.valk[static_cast<std::size_t>(k)] += gk::kWeightK[i] * h * fval[static_cast<std::size_t>(k)];
          if (i % 2 == 1) sumg[static_cast<std::size_t>(k)] += gk::kWeightG[i / 2] * h * fval[static_cast<std::size_t>(k)];
        }
      }
    }
    double err = 0.0;
    for (int k = 0; k < nout; ++k)
      err = std::max(err, std::abs(s.valk[static_cast<std::size_t>(k)] - sumg[static_cast<std::size_t>(k)]));
    s.err = err;
    return s;
  };

  std::vector<Seg> stack;
  stack.push_back(eval_seg(a, b));
  std::vector<Seg> done;
  const double span = std::abs(b - a);
  std::size_t n_seg = 1;

  // First pass estimate of the magnitude for the relative tolerance.
  std::vector<double> rough = stack.front().valk;

  while (!stack.empty()) {
    Seg s = std::move(stack.back());
    stack.pop_back();
    double mag = 0.0;
    for (int k = 0; k < nout; ++k) mag = std::max(mag, std::abs(rough[static_cast<std::size_t>(k)]));
    const double tol_here = std::max(abs_tol, rel_tol * mag) * (std::abs(s.b - s.a) / span);
    if (s.err <= tol_here || n_seg >= max_intervals ||
        std::abs(s.b - s.a) <= 1e-14 * span) {
      if (s.err > tol_here && n_seg >= max_intervals) status.converged = false;
      status.error += s.err;
      done.push_back(std::move(s));
      continue;
    }
    const double mid = 0.5 * (s.a + s.b);
    Seg left = eval_seg(s.a, mid);
    Seg right = eval_seg(mid, s.b);
    ++n_seg;
    // Keep the running magnitude estimate current.
    for (int k = 0; k < nout; ++k)
      rough[static_cast<std::size_t>(k)] +=
          left.valk[static_cast<std::size_t>(k)] + right.valk[static_cast<std::size_t>(k)] - s.valk[static_cast<std::size_t>(k)];
    stack.push_back(std::move(left));
    stack.push_back(std::move(right));
  }

  // Deterministic summation order: by left endpoint.
  std::sort(done.begin(), done.end(), [](const Seg& l, const Seg& r) { return l.a < r.a; });
  std::fill(result, result + nout, 0.0);
  for (const Seg& s : done)
    for (int k = 0; k < nout; ++k) result[k] += s.valk[static_cast<std::size_t>(k)];
  return status;
}

/// Scalar convenience wrapper.
template <typename Fn>
double integrate_gk15(Fn&& f, double a, double b, double rel_tol = 1e-10, double abs_tol = 0.0,
                      GkStatus* status_out = nullptr, std::size_t max_intervals = 4000) {
  double out = 0.0;
  auto wrap = [&f](double x, double* o) { o[0] = f(x); };
  GkStatus st = integrate_gk15_vec(wrap, a, b, 1, &out, rel_tol, abs_tol, max_intervals);
  if (status_out) *status_out = st;
  return out;
}

}  // namespace scint
