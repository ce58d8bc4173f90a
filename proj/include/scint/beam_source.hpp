#pragma once

// Gaussian Shell-model source: initial phase-space distribution, the analytic
// phase-diffuser average, and the effective radius r1 it produces. The
// diffuser enters only through the Gaussian tilt distribution with covariance
// 1/lambda^2, folded in closed form into r1; nothing is sampled here.

#include <cmath>
#include <limits>
#include <stdexcept>

#include "scint/support/vec2.hpp"

namespace scint {

/// r1^2 = r0^2 / (1 + 2 r0^2 / lambda^2); lambda = inf gives r1 = r0.
inline double effective_radius(double r0, double lambda) {
  if (!(r0 > 0.0)) throw std::domain_error("effective_radius: r0 must be > 0");
  if (!(lambda > 0.0)) throw std::domain_error("effective_radius: lambda must be > 0");
  if (std::isinf(lambda)) return r0;
  return r0 / std::sqrt(1.0 + 2.0 * r0 * r0 / (lambda * lambda));
}

struct BeamParams {
  double r0 = 0.0;  ///< initial beam radius, m
  double q0 = 0.0;  ///< central wavenumber, m^-1
  double lambda_diffuser = std::numeric_limits<double>::infinity();  ///< m; inf = coherent

  double r1() const { return effective_radius(r0, lambda_diffuser); }

  void validate() const {
    if (!(r0 > 0.0)) throw std::domain_error("beam.r0 must be > 0");
    if (!(q0 > 0.0)) throw std::domain_error("beam.q0 must be > 0");
    if (!(lambda_diffuser > 0.0)) throw std::domain_error("beam.lambda must be > 0 (or inf)");
  }
};

/// Diffuser-averaged initial phase-space weight, normalization dropped so the
/// peak (q = k = 0) is exactly 1:  exp(-q^2 r1^2/2 - k^2 r0^2/8).
/// The k-width depends only on r0, not on the diffuser.
inline double initial_phase_density(Vec2 k, Vec2 q, const BeamParams& beam) {
  const double r1 = beam.r1();
  return std::exp(-0.5 * q.norm_sq() * r1 * r1 - 0.125 * k.norm_sq() * beam.r0 * beam.r0);
}

/// Transverse field correlation of the source after diffuser averaging,
/// in units of the on-axis peak E0^2:
///   exp(-[r^2 + (r+Delta)^2]/r0^2) * exp(-Delta^2/lambda^2).
inline double source_correlation(Vec2 r_perp, Vec2 delta, const BeamParams& beam) {
  const Vec2 r2 = r_perp + delta;
  const double envelope = std::exp(-(r_perp.norm_sq() + r2.norm_sq()) / (beam.r0 * beam.r0));
  if (std::isinf(beam.lambda_diffuser)) return envelope;
  return envelope * std::exp(-delta.norm_sq() / (beam.lambda_diffuser * beam.lambda_diffuser));
}

}  // namespace scint
