#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

namespace scint {

/// J_0..J_n(x) by Miller downward recurrence (x >= 0). Stable for all orders.
inline void bessel_j_array(double x, int n, double* out) {
  if (x < 1e-12) {
    out[0] = 1.0;
    for (int k = 1; k <= n; ++k) out[k] = 0.0;
    return;
  }
  const int start = n + static_cast<int>(std::ceil(x)) + 20 +
                    static_cast<int>(std::ceil(10.0 * std::cbrt(x + 1.0)));
  std::vector<double> j(static_cast<std::size_t>(start) + 2, 0.0);
  j[static_cast<std::size_t>(start) + 1] = 0.0;
  j[static_cast<std::size_t>(start)] = 1e-300;
  for (int k = start; k >= 1; --k) {
    j[static_cast<std::size_t>(k) - 1] = (2.0 * k / x) * j[static_cast<std::size_t>(k)] - j[static_cast<std::size_t>(k) + 1];
    if (std::abs(j[static_cast<std::size_t>(k) - 1]) > 1e250) {
      for (std::size_t m = static_cast<std::size_t>(k) - 1; m < j.size(); ++m) j[m] *= 1e-250;
    }
  }
  // Normalization: J0 + 2*sum_{k>=1} J_{2k} = 1.
  double norm = j[0];
  for (int k = 2; k <= start; k += 2) norm += 2.0 * j[static_cast<std::size_t>(k)];
  for (int k = 0; k <= n; ++k) out[k] = j[static_cast<std::size_t>(k)] / norm;
}

/// I_0..I_n(y) by downward recurrence (y >= 0).
inline void bessel_i_array(double y, int n, double* out) {
  if (y < 1e-12) {
    out[0] = 1.0;
    for (int k = 1; k <= n; ++k) out[k] = 0.0;
    return;
  }
  const int start = n + 20 + static_cast<int>(std::ceil(2.0 * std::sqrt(y * (n + 1.0)) / (n + 1.0) + y));
  std::vector<double> v(static_cast<std::size_t>(start) + 2, 0.0);
  v[static_cast<std::size_t>(start) + 1] = 0.0;
  v[static_cast<std::size_t>(start)] = 1e-300;
  for (int k = start; k >= 1; --k) {
    v[static_cast<std::size_t>(k) - 1] = (2.0 * k / y) * v[static_cast<std::size_t>(k)] + v[static_cast<std::size_t>(k) + 1];
    if (std::abs(v[static_cast<std::size_t>(k) - 1]) > 1e250) {
      for (std::size_t m = static_cast<std::size_t>(k) - 1; m < v.size(); ++m) v[m] *= 1e-250;
    }
  }
  // Normalization: I0 + 2*sum_{k>=1} I_k = e^y.
  double norm = v[0];
  for (int k = 1; k <= start; ++k) norm += 2.0 * v[static_cast<std::size_t>(k)];
  const double scale = std::exp(y) / norm;
  for (int k = 0; k <= n; ++k) out[k] = v[static_cast<std::size_t>(k)] * scale;
}

/// Gauss-Legendre nodes/weights on [-1,1] (Newton on Legendre polynomials).
inline void gauss_legendre(int n, std::vector<double>& x, std::vector<double>& w) {
  x.assign(static_cast<std::size_t>(n), 0.0);
  w.assign(static_cast<std::size_t>(n), 0.0);
  const int m = (n + 1) / 2;
  for (int i = 0; i < m; ++i) {
    double xi = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    double pp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = 0.0;
      for (int j = 0; j < n; ++j) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * j + 1.0) * xi * p1 - j * p2) / (j + 1.0);
      }
      pp = n * (xi * p0 - p1) / (xi * xi - 1.0);
      const double dx = p0 / pp;
      xi -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    x[static_cast<std::size_t>(i)] = -xi;
    x[static_cast<std::size_t>(n - 1 - i)] = xi;
    w[static_cast<std::size_t>(i)] = 2.0 / ((1.0 - xi * xi) * pp * pp);
    w[static_cast<std::size_t>(n - 1 - i)] = w[static_cast<std::size_t>(i)];
  }
}

}  // namespace scint
