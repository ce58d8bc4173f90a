#pragma once

// Refractive-index fluctuation spectra and the induced random-force spectral
// tensor. All quantities are strict SI: the spectral density psi carries m^3
// (3-D spectrum); after the Markov reduction it is evaluated on transverse
// 2-D wavevectors with the same closed form and units. The per-unit-path
// factor of the Markov reduction (2*pi, once all times are expressed as path
// lengths) lives in trajectory_kernel, not here.

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "scint/support/gauss_kronrod.hpp"
#include "scint/support/vec2.hpp"

namespace scint {

enum class SpectrumModel { VonKarman, Tatarskii };

struct TurbulenceParams {
  double cn2 = 0.0;   ///< structure constant C_n^2, m^(-2/3)
  double l0 = 0.0;    ///< inner scale, m
  double L0 = std::numeric_limits<double>::infinity();  ///< outer scale, m
  SpectrumModel model = SpectrumModel::Tatarskii;

  /// l0' = l0 / (2 pi), the reduced inner scale used by all closed forms.
  double l0_reduced() const { return l0 / (2.0 * M_PI); }

  /// 1/L0^2 term of the spectrum denominator. Identically zero for the
  /// Tatarskii model, making it bit-identical to von Karman with L0 -> inf.
  double inv_L0_sq() const {
    return model == SpectrumModel::Tatarskii ? 0.0 : 1.0 / (L0 * L0);
  }

  void validate() const {
    if (!(cn2 >= 0.0)) throw std::domain_error("turbulence.cn2 must be >= 0");
    if (!(l0 > 0.0)) throw std::domain_error("turbulence.l0 must be > 0");
    if (model == SpectrumModel::VonKarman) {
      if (!std::isfinite(L0)) throw std::domain_error("turbulence.L0 must be finite (and explicit) for the VonKarman model");
      if (!(L0 > l0)) throw std::domain_error("turbulence.L0 must exceed l0");
    }
  }
};

/// Spectral density psi(g) = 0.033 C_n^2 exp[-(g l0/2pi)^2] / [g^2 + L0^-2]^(11/6).
/// Units m^3; g is a transverse wavenumber magnitude in m^-1.
inline double spectrum_psi(double g, const TurbulenceParams& p) {
  if (!(g >= 0.0)) throw std::domain_error("spectrum_psi: g must be >= 0");
  const double denom_base = g * g + p.inv_L0_sq();
  if (denom_base <= 0.0) {
    if (p.model == SpectrumModel::Tatarskii)
      throw std::domain_error("spectrum_psi: g = 0 diverges for the Tatarskii model");
    // von Karman with finite L0 is regular at g = 0.
  }
  const double lr = p.l0_reduced();
  return 0.033 * p.cn2 * std::exp(-(g * lr) * (g * lr)) * std::pow(denom_base, -11.0 / 6.0);
}

/// Random-force spectral tensor omega0^2 g_a g_b psi(|g|).
/// omega0 in rad/s; symmetric, PSD, rank <= 1 at each g.
inline Mat2 force_spectral_tensor(Vec2 g_vec, double omega0, const TurbulenceParams& p) {
  if (!(omega0 > 0.0)) throw std::domain_error("force_spectral_tensor: omega0 must be > 0");
  const double g = g_vec.norm();
  const double psi = spectrum_psi(g, p);
  const double w2 = omega0 * omega0;
  return Mat2{w2 * g_vec.x * g_vec.x * psi, w2 * g_vec.x * g_vec.y * psi, w2 * g_vec.y * g_vec.y * psi};
}

namespace detail {

/// int_0^inf g^n psi(g) dg via adaptive quadrature. The n = 3 integrand has an
/// integrable g^(-2/3) singularity at 0 for the Tatarskii model; the g = t^3
/// power-graded substitution removes it exactly.
inline double radial_moment_quadrature(int n, const TurbulenceParams& p) {
  const double gmax = 8.0 / p.l0_reduced();  // exp(-64) tail beyond: negligible
  const double tmax = std::cbrt(gmax);
  auto f = [&](double t) {
    const double g = t * t * t;
    const double jac = 3.0 * t * t;
    if (g == 0.0) return 0.0;
    return std::pow(g, n) * spectrum_psi(g, p) * jac;
  };
  return integrate_gk15(f, 0.0, tmax, 1e-11, 0.0);
}

}  // namespace detail

/// int_0^inf g^3 psi(g) dg: closed form for the Tatarskii model
/// (0.033 C_n^2 Gamma(1/6) l0'^(-1/3) / 2), quadrature for von Karman.
inline double spectral_moment_j3(const TurbulenceParams& p) {
  if (p.cn2 == 0.0) return 0.0;
  if (p.model == SpectrumModel::Tatarskii)
    return 0.033 * p.cn2 * 0.5 * std::tgamma(1.0 / 6.0) * std::pow(p.l0_reduced(), -1.0 / 3.0);
  return detail::radial_moment_quadrature(3, p);
}

/// int_0^inf g^5 psi(g) dg: closed form for Tatarskii
/// (0.033 C_n^2 Gamma(7/6) l0'^(-7/3) / 2), quadrature for von Karman.
inline double spectral_moment_j5(const TurbulenceParams& p) {
  if (p.cn2 == 0.0) return 0.0;
  if (p.model == SpectrumModel::Tatarskii)
    return 0.033 * p.cn2 * 0.5 * std::tgamma(7.0 / 6.0) * std::pow(p.l0_reduced(), -7.0 / 3.0);
  return detail::radial_moment_quadrature(5, p);
}

}  // namespace scint
