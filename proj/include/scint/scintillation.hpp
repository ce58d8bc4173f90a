#pragma once

// Assembles <I>, <I^2>, sigma^2(z) and the beam diagnostics.
//
// Both bracket terms of the intensity second moment are reduced the same way:
// the mean transverse momentum integrates to a delta that pins p' to
// -p - (k + k') z/q0, and for a fixed momentum difference d every remaining
// Gaussian factor -- the source widths, the self kernels, and the cross
// kernel (exactly bilinear through the tensor moments) -- forms a positive
// definite quadratic form in (p, k, k') that integrates in closed form. What
// is left is a low-dimensional integral over d. A sampling route over the
// full (p, k, k', d) space is kept behind IntegrationMethod::{QuasiMonteCarlo,
// MonteCarlo} as an independent cross-check of the reduction.

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "scint/beam_source.hpp"
#include "scint/quadrature.hpp"
#include "scint/support/gauss_kronrod.hpp"
#include "scint/support/parallel.hpp"
#include "scint/support/special.hpp"
#include "scint/trajectory_kernel.hpp"
#include "scint/turbulence.hpp"

namespace scint {

struct PropagationQuery {
  double z = 0.0;               ///< propagation distance, m (> 0)
  Vec2 r_perp{0.0, 0.0};        ///< detector transverse offset, m
  KernelMode mode = KernelMode::Correlated;

  void validate() const {
    if (!(z > 0.0)) throw std::domain_error("query.z must be > 0");
  }
};

struct SigmaCurvePoint {
  double z = 0.0;
  double sigma2_correlated = std::nan("");
  double sigma2_multiplicative = std::nan("");
  double mean_intensity = 0.0;  ///< arbitrary units
  double dq2 = 0.0;             ///< m^-2
  double beam_radius_sq = 0.0;  ///< m^2
  double applicability_ratio = 0.0;
  double err_sigma2_corr = std::nan("");
  double err_sigma2_mult = std::nan("");
  bool converged = true;
};

// ---------------------------------------------------------------------------
// Diagnostics
// ---------------------------------------------------------------------------

/// Transverse momentum diffusion <dq^2> = 4 pi^2 q0^2 J3 z. For the
/// Tatarskii spectrum J3 is closed-form and this equals
/// 0.066 pi^2 Gamma(1/6) q0^2 l0'^(-1/3) C_n^2 z.
inline double momentum_diffusion(double z, const BeamParams& beam, const TurbulenceParams& turb) {
  if (!(z >= 0.0)) throw std::domain_error("momentum_diffusion: z must be >= 0");
  return 4.0 * M_PI * M_PI * beam.q0 * beam.q0 * spectral_moment_j3(turb) * z;
}

/// Mean-square beam radius
///   R^2 = (r0^2/2)[1 + 4 z^2/(q0^2 r0^2 r1^2)] + (4 pi^2/3) J3 z^3,
/// i.e. (r0^2/2)[1 + 4z^2/(q0^2 r0^2 r1^2) + 8 z^3 T / r0^2] with
/// T = (pi^2/3) J3 (= 0.558 l0^(-1/3) C_n^2 for the Tatarskii spectrum).
inline double beam_radius_sq(double z, const BeamParams& beam, const TurbulenceParams& turb) {
  if (!(z >= 0.0)) throw std::domain_error("beam_radius_sq: z must be >= 0");
  const double r1 = beam.r1();
  const double diff = 0.5 * beam.r0 * beam.r0 +
                      2.0 * z * z / (beam.q0 * beam.q0 * r1 * r1);
  return diff + (4.0 * M_PI * M_PI / 3.0) * spectral_moment_j3(turb) * z * z * z;
}

/// Momentum-spread to momentum-uncertainty ratio sqrt(<dq^2> R^2) in the
/// turbulence-dominated regime, i.e. sqrt(<dq^2> * 4 z^3 T). Proportional to
/// z^2; the trajectory picture requires it to be large.
inline double applicability_ratio(double z, const BeamParams& beam, const TurbulenceParams& turb) {
  if (!(z > 0.0)) throw std::domain_error("applicability_ratio: z must be > 0");
  const double j3 = spectral_moment_j3(turb);
  const double dq2 = 4.0 * M_PI * M_PI * beam.q0 * beam.q0 * j3 * z;
  const double beam_term = 4.0 * z * z * z * (M_PI * M_PI / 3.0) * j3;
  return std::sqrt(dq2 * beam_term);
}

// ---------------------------------------------------------------------------
// Gaussian-reduction machinery
// ---------------------------------------------------------------------------

namespace detail {

using Sym3 = std::array<std::array<double, 3>, 3>;

inline Sym3 sym3_zero() { return {{{0, 0, 0}, {0, 0, 0}, {0, 0, 0}}}; }

inline void add_outer(Sym3& m, const std::array<double, 3>& v, double c) {
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) m[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] += c * v[static_cast<std::size_t>(i)] * v[static_cast<std::size_t>(j)];
}

inline Sym3 add(const Sym3& a, const Sym3& b) {
  Sym3 r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) r[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = a[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] + b[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  return r;
}

inline double det3(const Sym3& m) {
  return m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
         m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
         m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
}

/// Solves m x = b for symmetric positive definite m (cofactor form).
inline std::array<double, 3> solve3(const Sym3& m, const std::array<double, 3>& b, double det) {
  std::array<double, 3> x{};
  const double c00 = m[1][1] * m[2][2] - m[1][2] * m[2][1];
  const double c01 = m[0][2] * m[2][1] - m[0][1] * m[2][2];
  const double c02 = m[0][1] * m[1][2] - m[0][2] * m[1][1];
  const double c11 = m[0][0] * m[2][2] - m[0][2] * m[2][0];
  const double c12 = m[0][2] * m[1][0] - m[0][0] * m[1][2];
  const double c22 = m[0][0] * m[1][1] - m[0][1] * m[1][0];
  x[0] = (c00 * b[0] + c01 * b[1] + c02 * b[2]) / det;
  x[1] = (c01 * b[0] + c11 * b[1] + c12 * b[2]) / det;
  x[2] = (c02 * b[0] + c12 * b[1] + c22 * b[2]) / det;
  return x;
}

/// The z-dependent pieces shared by every second-moment evaluation.
struct SigmaAssembly {
  double z, q0, rho, r0, r1;
  double w_mean;                 ///< Gaussian width W(z) of the mean intensity
  Sym3 prior1, prior2, kern_self;
  std::array<double, 3> e_v{};   ///< phase vector of the d-oscillation
  std::array<double, 3> e_b{};   ///< phase vector of the detector offset
  std::array<double, 3> scale{}; ///< conditioning rescale of (p, k, k')

  SigmaAssembly(double z_, const KernelContext& ctx) : z(z_) {
    q0 = ctx.q0();
    rho = z / q0;
    r0 = ctx.beam.r0;
    r1 = ctx.beam.r1();
    const double j3 = ctx.j3;
    w_mean = r0 * r0 / 8.0 + z * z / (2.0 * q0 * q0 * r1 * r1) + (M_PI * M_PI / 3.0) * j3 * z * z * z;

    // Source Gaussians of the first bracket term, with p' = -p - rho (k + k'):
    //   p^2/(2 r1^2) + p'^2/(2 r1^2) + (k^2 + k'^2) r0^2/8.
    prior1 = sym3_zero();
    add_outer(prior1, {1, 0, 0}, 1.0 / (2.0 * r1 * r1));
    add_outer(prior1, {1, rho, rho}, 1.0 / (2.0 * r1 * r1));
    add_outer(prior1, {0, 1, 0}, r0 * r0 / 8.0);
    add_outer(prior1, {0, 0, 1}, r0 * r0 / 8.0);

    // Second bracket term, after the difference/sum completed squares
    //   (Q - Q')^2 r0^2/4 + (Q + Q')^2 r1^2/4 + (k+k')^2 r0^2/16 + (k-k')^2 r1^2/16
    // with the momentum integrations already carried out:
    //   [2p + rho(k+k')]^2/(4 r0^2) + (k+k')^2 [z^2/(4 q0^2 r1^2) + r0^2/16]
    //   + (k-k')^2 r1^2/16.
    prior2 = sym3_zero();
    add_outer(prior2, {2, rho, rho}, 1.0 / (4.0 * r0 * r0));
    add_outer(prior2, {0, 1, 1}, z * z / (4.0 * q0 * q0 * r1 * r1) + r0 * r0 / 16.0);
    add_outer(prior2, {0, 1, -1}, r1 * r1 / 16.0);

    // Self kernels (phi_PP + phi_P'P')/2 as one 3x3 form per component.
    const double dc = ctx.kappa() * M_PI * j3;  // 2 pi^2 q0^2 J3
    const double s11 = dc * z, s12 = dc * z * z / (2.0 * q0), s22 = dc * z * z * z / (3.0 * q0 * q0);
    kern_self = sym3_zero();
    auto add_self = [&](const std::array<double, 3>& vp, const std::array<double, 3>& vk) {
      // 1/2 [vp vk] [[s11 s12],[s12 s22]] [vp vk]^T with (vp, vk) the rows
      // mapping x -> (p_c, k_c) of the trajectory.
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
          kern_self[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] +=
              0.5 * (s11 * vp[static_cast<std::size_t>(i)] * vp[static_cast<std::size_t>(j)] +
                     s12 * (vp[static_cast<std::size_t>(i)] * vk[static_cast<std::size_t>(j)] + vk[static_cast<std::size_t>(i)] * vp[static_cast<std::size_t>(j)]) +
                     s22 * vk[static_cast<std::size_t>(i)] * vk[static_cast<std::size_t>(j)]);
    };
    add_self({1, 0, 0}, {0, 1, 0});            // trajectory P: (p, k)
    add_self({-1, -rho, -rho}, {0, 0, 1});     // trajectory P': (p', k')

    e_v = {1, rho, 0};   // d . (p + k z/q0)
    e_b = {0, 1, 1};     // r_perp . (k + k')
    scale = {r1, 2.0 / r0, 2.0 / r0};
  }

  /// Cross form 2*phi_PP'/2 = phi_PP' for one component, given the moments.
  Sym3 cross_form(double g0, double g1, double g2, const KernelContext& ctx) const {
    const double kap = ctx.kappa();
    const double c11 = kap * g0, c12 = kap * g1 / q0, c22 = kap * g2 / (q0 * q0);
    // y1 = (p, k) of P maps from x via rows P; y2 = (p', k') via rows L.
    const std::array<double, 3> p1{1, 0, 0}, k1{0, 1, 0};
    const std::array<double, 3> p2{-1, -rho, -rho}, k2{0, 0, 1};
    Sym3 m = sym3_zero();
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        const double bil = c11 * p1[static_cast<std::size_t>(i)] * p2[static_cast<std::size_t>(j)] +
                           c12 * (p1[static_cast<std::size_t>(i)] * k2[static_cast<std::size_t>(j)] + k1[static_cast<std::size_t>(i)] * p2[static_cast<std::size_t>(j)]) +
                           c22 * k1[static_cast<std::size_t>(i)] * k2[static_cast<std::size_t>(j)];
        m[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] += 0.5 * bil;
        m[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)] += 0.5 * bil;
      }
    return m;
  }

  /// One Gaussian block: integral over the scaled 3-vector with linear phase b.
  ///   int d^3x exp(-x A x + i b.x) = det(S) pi^(3/2) det(SAS)^(-1/2)
  ///                                  exp(-(Sb) (SAS)^-1 (Sb) / 4).
  struct Block {
    double det_scaled;
    std::array<double, 3> inv_b;  // (SAS)^-1 (S b)
    double quad;                  // (Sb) (SAS)^-1 (Sb)
  };

  Block block(const Sym3& a, const std::array<double, 3>& b) const {
    Sym3 as;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        as[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = scale[static_cast<std::size_t>(i)] * a[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] * scale[static_cast<std::size_t>(j)];
    Block out;
    out.det_scaled = det3(as);
    std::array<double, 3> bs{b[0] * scale[0], b[1] * scale[1], b[2] * scale[2]};
    out.inv_b = solve3(as, bs, out.det_scaled);
    out.quad = bs[0] * out.inv_b[0] + bs[1] * out.inv_b[1] + bs[2] * out.inv_b[2];
    return out;
  }

  double det_scale() const { return scale[0] * scale[1] * scale[2]; }
};

}  // namespace detail

struct Sigma2Result {
  double sigma2 = std::nan("");
  double error_estimate = std::nan("");
  double mean_intensity = 0.0;   ///< arbitrary units
  double second_moment = 0.0;    ///< same arbitrary units, squared
  std::int64_t evals = 0;
  bool converged = false;
};

struct SigmaEvalOptions {
  bool zero_pair_correlation = false;  ///< force phi_PP' to 0 (diagnostics)
  double kernel_rel_tol = 1e-5;        ///< tolerance of the inner moment integrals
  int table_nodes = 128;               ///< moment-table resolution; 0 = no table (slow, exact nodes)
};

/// Mean intensity (arbitrary units): closed Gaussian profile
///   <I>(z, r) = (2 pi / r1^2) (pi / W) exp(-r^2 / 4W),
/// W = r0^2/8 + z^2/(2 q0^2 r1^2) + (pi^2/3) J3 z^3.
inline double mean_intensity(const PropagationQuery& query, const BeamParams& beam,
                             const TurbulenceParams& turb) {
  query.validate();
  const double r1 = beam.r1();
  const double j3 = spectral_moment_j3(turb);
  const double w = beam.r0 * beam.r0 / 8.0 + query.z * query.z / (2.0 * beam.q0 * beam.q0 * r1 * r1) +
                   (M_PI * M_PI / 3.0) * j3 * query.z * query.z * query.z;
  return (2.0 * M_PI / (r1 * r1)) * (M_PI / w) * std::exp(-query.r_perp.norm_sq() / (4.0 * w));
}

namespace detail {

inline Sigma2Result sigma2_reduced(const PropagationQuery& query, const KernelContext& ctx,
                                   const IntegrationConfig& cfg, const SigmaEvalOptions& opt) {
  const SigmaAssembly as(query.z, ctx);
  const double r0 = as.r0, r1 = as.r1;
  Sigma2Result res;

  const double b_mean = (2.0 * M_PI / (r1 * r1)) * (M_PI / as.w_mean) *
                        std::exp(-query.r_perp.norm_sq() / (4.0 * as.w_mean));
  res.mean_intensity = b_mean;

  // Truncation radius of the d-integral from the factorized Gaussian decay
  // exp(-s^2 q/4), the weaker of the two bracket terms.
  double eps_min = INFINITY;
  for (const auto* prior : {&as.prior1, &as.prior2}) {
    const detail::Sym3 a = detail::add(*prior, as.kern_self);
    const auto blk = as.block(a, as.e_v);
    eps_min = std::min(eps_min, blk.quad);  // quad(e_v) = e_v A^-1 e_v (scaled)
  }
  double s_max = cfg.truncation_sigmas * 2.0 / std::sqrt(eps_min) * 1.25;

  const double q0 = as.q0;
  const bool on_axis = query.r_perp.norm_sq() == 0.0;
  const double r_norm = query.r_perp.norm();
  const bool with_cross = !opt.zero_pair_correlation && ctx.turb.cn2 > 0.0;

  std::int64_t evals = 0;
  MomentTable table;
  auto build_table = [&] {
    if (!with_cross || opt.table_nodes <= 0) return;
    table = MomentTable(s_max * 1.05, query.z, query.mode, ctx, opt.table_nodes, opt.kernel_rel_tol,
                        [&](std::int64_t n, auto&& fn) { parallel_for(n, cfg.workers, fn); });
    evals += table.evals();
  };
  build_table();

  auto integrand_at = [&](double s, double phi_d) {
    // phi_d: angle between d and r_perp (irrelevant on axis).
    detail::Sym3 cx = detail::sym3_zero(), cy = detail::sym3_zero();
    if (with_cross) {
      KernelMoments m;
      if (table.valid()) {
        m = table.eval(s);
      } else {
        m = kernel_moments(s / q0, query.z, query.mode, ctx, opt.kernel_rel_tol);
        evals += m.evals;
      }
      cx = as.cross_form(m.g0x, m.g1x, m.g2x, ctx);
      cy = as.cross_form(m.g0y, m.g1y, m.g2y, ctx);
    }
    const double rx = r_norm * std::cos(phi_d);
    const double ry = -r_norm * std::sin(phi_d);
    // Relative to <I>^2, the two bracket terms enter with weights 1 and
    // r1^2/r0^2; the absolute Gaussian measures cancel against <I>^2.
    double total = 0.0;
    int term = 0;
    for (const auto* prior : {&as.prior1, &as.prior2}) {
      const detail::Sym3 ax = detail::add(detail::add(*prior, as.kern_self), cx);
      const detail::Sym3 ay = detail::add(detail::add(*prior, as.kern_self), cy);
      std::array<double, 3> bx{s * as.e_v[0] - rx * as.e_b[0], s * as.e_v[1] - rx * as.e_b[1],
                               s * as.e_v[2] - rx * as.e_b[2]};
      std::array<double, 3> by{-ry * as.e_b[0], -ry * as.e_b[1], -ry * as.e_b[2]};
      const auto blx = as.block(ax, bx);
      const auto bly = as.block(ay, by);
      ++term;
      if (!(blx.det_scaled > 0.0) || !(bly.det_scaled > 0.0)) continue;  // PSD guard
      const double pref = (term == 1) ? 1.0 : (r1 * r1) / (r0 * r0);
      total += pref * std::exp(-0.25 * (blx.quad + bly.quad)) /
               std::sqrt(blx.det_scaled * bly.det_scaled);
    }
    const double dsc = as.det_scale();
    return total * dsc * dsc;
  };

  // Verify the truncation: extend while the integrand has not decayed.
  for (int guard = 0; guard < 3; ++guard) {
    const double edge = s_max * integrand_at(s_max, 0.0);
    const double peak = std::max(integrand_at(0.0, 0.0), s_max * 0.1 * integrand_at(s_max * 0.1, 0.0));
    if (edge <= peak * std::exp(-0.8 * cfg.truncation_sigmas * cfg.truncation_sigmas) || peak == 0.0) break;
    s_max *= 1.6;
    build_table();
  }

  double n_total = 0.0, n_error = 0.0;
  if (on_axis) {
    GkStatus st;
    double val = 0.0;
    auto f = [&](double s, double* o) { o[0] = s * integrand_at(s, 0.0); };
    st = integrate_gk15_vec(f, 0.0, s_max, 1, &val, cfg.rel_tol * 0.25, 0.0,
                            static_cast<std::size_t>(std::max<std::int64_t>(64, cfg.max_evals / 1000)));
    n_total = 2.0 * M_PI * val;
    n_error = 2.0 * M_PI * st.error;
    res.converged = st.converged;
  } else {
    // Angular trapezoid (periodic, even in phi) times radial adaptive rule.
    const int n_phi = 24;
    GkStatus st;
    double val = 0.0;
    auto f = [&](double s, double* o) {
      double acc = 0.0;
      for (int j = 0; j < n_phi; ++j) acc += integrand_at(s, 2.0 * M_PI * j / n_phi);
      o[0] = s * acc * (2.0 * M_PI / n_phi);
    };
    st = integrate_gk15_vec(f, 0.0, s_max, 1, &val, cfg.rel_tol * 0.25, 0.0,
                            static_cast<std::size_t>(std::max<std::int64_t>(64, cfg.max_evals / 1000)));
    n_total = val;
    n_error = st.error;
    res.converged = st.converged;
  }

  const double b_sq = b_mean * b_mean;
  const double w2 = as.w_mean * as.w_mean;
  const double scale_out = (w2 / (4.0 * M_PI)) * std::exp(query.r_perp.norm_sq() / (2.0 * as.w_mean));
  const double ratio = scale_out * n_total;  // = <I^2>/<I>^2
  res.second_moment = ratio * b_sq;
  res.sigma2 = ratio - 1.0;
  res.error_estimate = scale_out * n_error;
  res.evals = evals;
  return res;
}

inline double inverse_normal_cdf(double p);

inline Sigma2Result sigma2_sampling(const PropagationQuery& query, const KernelContext& ctx,
                                    const IntegrationConfig& cfg, const SigmaEvalOptions& opt) {
  // Independent route: importance-sample (p, k, k') from the factorized
  // Gaussian (source widths + self kernels; the cross kernel and the
  // d-oscillation stay in the integrand) and d from an over-wide Gaussian.
  // Variable order of the sampling cube: (p,k,k')_x, (p,k,k')_y, d_x, d_y.
  const SigmaAssembly as(query.z, ctx);
  const double r0 = as.r0, r1 = as.r1;
  const double q0 = as.q0;
  Sigma2Result res;
  const double b_mean = (2.0 * M_PI / (r1 * r1)) * (M_PI / as.w_mean) *
                        std::exp(-query.r_perp.norm_sq() / (4.0 * as.w_mean));
  res.mean_intensity = b_mean;

  // Precompute moment tables over |d| for interpolation (deterministic).
  double eps_min = INFINITY;
  std::array<detail::Sym3, 2> a_fact;
  int idx = 0;
  for (const auto* prior : {&as.prior1, &as.prior2}) {
    a_fact[static_cast<std::size_t>(idx)] = detail::add(*prior, as.kern_self);
    const auto blk = as.block(a_fact[static_cast<std::size_t>(idx)], as.e_v);
    eps_min = std::min(eps_min, blk.quad);
    ++idx;
  }
  const double s_max = cfg.truncation_sigmas * 2.0 / std::sqrt(eps_min) * 1.6;
  const bool with_cross = !opt.zero_pair_correlation && ctx.turb.cn2 > 0.0;
  MomentTable table;
  if (with_cross) {
    table = MomentTable(s_max * 4.0, query.z, query.mode, ctx, std::max(opt.table_nodes, 64),
                        opt.kernel_rel_tol,
                        [&](std::int64_t n, auto&& fn) { parallel_for(n, cfg.workers, fn); });
  }
  auto moments_at = [&](double s) {
    if (!with_cross) return KernelMoments{};
    return table.eval(s);
  };

  // Cholesky of the scaled covariance (A~)^-1/2 per 3-block.
  struct Chol {
    std::array<std::array<double, 3>, 3> l{};
    double det_a;  // det of the scaled form
  };
  auto chol_of = [&](const detail::Sym3& a) {
    detail::Sym3 asx;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        asx[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] =
            as.scale[static_cast<std::size_t>(i)] * a[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] * as.scale[static_cast<std::size_t>(j)];
    // Covariance of the sampling density exp(-x~ A~ x~) is A~^-1/2.
    const double det = detail::det3(asx);
    // Invert (cofactors) then Cholesky.
    detail::Sym3 inv;
    const auto col = [&](int j) {
      std::array<double, 3> e{0, 0, 0};
      e[static_cast<std::size_t>(j)] = 1.0;
      return detail::solve3(asx, e, det);
    };
    for (int j = 0; j < 3; ++j) {
      const auto c = col(j);
      for (int i = 0; i < 3; ++i) inv[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = 0.5 * c[static_cast<std::size_t>(i)];
    }
    Chol out;
    out.det_a = det;
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j <= i; ++j) {
        double sum = inv[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
        for (int k = 0; k < j; ++k) sum -= out.l[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)] * out.l[static_cast<std::size_t>(j)][static_cast<std::size_t>(k)];
        if (i == j)
          out.l[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)] = std::sqrt(std::max(sum, 0.0));
        else
          out.l[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = sum / out.l[static_cast<std::size_t>(j)][static_cast<std::size_t>(j)];
      }
    }
    return out;
  };
  const std::array<Chol, 2> chol{chol_of(a_fact[0]), chol_of(a_fact[1])};

  const double sd = 2.0 * std::sqrt(2.0 / eps_min);  // over-wide proposal per d-component
  const double kap = ctx.kappa();

  double n_total = 0.0, n_err_sq = 0.0;
  std::int64_t n_evals = 0;
  bool ok = true;
  for (int term = 0; term < 2; ++term) {
    // Relative weights of the two bracket terms (see sigma2_reduced).
    const double pref = (term == 0) ? 1.0 : (r1 * r1) / (r0 * r0);
    const double dsc = as.det_scale();
    const double z6 = dsc * dsc / chol[static_cast<std::size_t>(term)].det_a;
    const auto& lmat = chol[static_cast<std::size_t>(term)].l;

    Integrand f = [&, term](const double* u) -> double {
      auto quantile = [](double p) {
        return inverse_normal_cdf(std::clamp(p, 1e-15, 1.0 - 1e-15));
      };
      std::array<double, 3> nx{}, ny{};
      for (int i = 0; i < 3; ++i) {
        nx[static_cast<std::size_t>(i)] = quantile(u[i]);
        ny[static_cast<std::size_t>(i)] = quantile(u[3 + i]);
      }
      auto apply = [&](const std::array<double, 3>& n) {
        std::array<double, 3> x{};
        for (int i = 0; i < 3; ++i) {
          double s = 0.0;
          for (int j = 0; j <= i; ++j) s += lmat[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] * n[static_cast<std::size_t>(j)];
          x[static_cast<std::size_t>(i)] = s * as.scale[static_cast<std::size_t>(i)];
        }
        return x;  // (p_c, k_c, k'_c) unscaled
      };
      const auto xc = apply(nx);
      const auto yc = apply(ny);
      const double dx = sd * quantile(u[6]);
      const double dy = sd * quantile(u[7]);
      const double s = std::hypot(dx, dy);

      // phi_PP' in the frame aligned with d.
      double phi_cross = 0.0;
      if (with_cross && s > 0.0) {
        const KernelMoments m = moments_at(s);
        const double inv = 1.0 / s;
        const double ex_x = dx * inv, ex_y = dy * inv;
        // Project lab components (p,k,k') onto (ex, ey).
        const double px = xc[0] * ex_x + yc[0] * ex_y, py = -xc[0] * ex_y + yc[0] * ex_x;
        const double kx = xc[1] * ex_x + yc[1] * ex_y, ky = -xc[1] * ex_y + yc[1] * ex_x;
        const double kpx = xc[2] * ex_x + yc[2] * ex_y, kpy = -xc[2] * ex_y + yc[2] * ex_x;
        const double rho = as.rho;
        const double ppx = -px - rho * (kx + kpx), ppy = -py - rho * (ky + kpy);
        phi_cross = kap * (px * ppx * m.g0x + (px * kpx + kx * ppx) * m.g1x / q0 + kx * kpx * m.g2x / (q0 * q0) +
                           py * ppy * m.g0y + (py * kpy + ky * ppy) * m.g1y / q0 + ky * kpy * m.g2y / (q0 * q0));
      }
      // Oscillation d.(p + k z/q0) and detector-offset phase -(k + k').r.
      const Vec2 p{xc[0], yc[0]}, k{xc[1], yc[1]}, kp{xc[2], yc[2]};
      const Vec2 v = p + k * as.rho;
      const Vec2 kk = k + kp;
      const double phase = dx * v.x + dy * v.y - kk.dot(query.r_perp);
      // Remove the proposal density of d (pi sd^2)^-1 exp(-s^2/(2 sd^2)) ...
      const double prop = std::exp(-0.5 * (dx * dx + dy * dy) / (sd * sd)) / (2.0 * M_PI * sd * sd);
      return z6 * std::exp(-phi_cross) * std::cos(phase) / prop;
    };

    IntegrationConfig sub = cfg;
    sub.rel_tol = cfg.rel_tol * 0.7;
    sub.max_evals = std::max<std::int64_t>(cfg.max_evals / 2, 1000);
    sub.seed = cfg.seed + static_cast<std::uint64_t>(term);
    std::vector<std::array<double, 2>> unit(8, {0.0, 1.0});
    const IntegralResult ir = integrate(f, unit, sub);
    n_total += pref * ir.estimate;
    n_err_sq += pref * pref * ir.error_estimate * ir.error_estimate;
    n_evals += ir.evals;
    ok = ok && ir.converged;
  }

  const double w2 = as.w_mean * as.w_mean;
  const double scale_out = (w2 / (4.0 * M_PI)) * std::exp(query.r_perp.norm_sq() / (2.0 * as.w_mean));
  const double ratio = scale_out * n_total;
  res.second_moment = ratio * b_mean * b_mean;
  res.sigma2 = ratio - 1.0;
  res.error_estimate = scale_out * std::sqrt(n_err_sq);
  res.evals = n_evals;
  res.converged = ok;
  return res;
}

/// Acklam's rational approximation of the standard normal quantile
/// (|relative error| < 1.2e-9; ample for the sampling routes).
inline double inverse_normal_cdf(double p) {
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                 1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                 6.680131188771972e+01, -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                 -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                 3.754408661907416e+00};
  const double pl = 0.02425;
  if (p <= 0.0) return -INFINITY;
  if (p >= 1.0) return INFINITY;
  if (p < pl) {
    const double q = std::sqrt(-2.0 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  if (p > 1.0 - pl) {
    const double q = std::sqrt(-2.0 * std::log(1.0 - p));
    return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double q = p - 0.5;
  const double r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

}  // namespace detail

/// Intensity second moment <I^2> in the same arbitrary units as
/// mean_intensity squared.
inline Sigma2Result second_moment(const PropagationQuery& query, const BeamParams& beam,
                                  const TurbulenceParams& turb, const IntegrationConfig& cfg,
                                  const SigmaEvalOptions& opt = {}) {
  query.validate();
  cfg.validate();
  const KernelContext ctx(turb, beam);
  if (cfg.method == IntegrationMethod::AdaptiveProduct)
    return detail::sigma2_reduced(query, ctx, cfg, opt);
  return detail::sigma2_sampling(query, ctx, cfg, opt);
}

/// Scintillation index sigma^2 = (<I^2> - <I>^2) / <I>^2.
inline Sigma2Result sigma2(const PropagationQuery& query, const BeamParams& beam,
                           const TurbulenceParams& turb, const IntegrationConfig& cfg,
                           const SigmaEvalOptions& opt = {}) {
  return second_moment(query, beam, turb, cfg, opt);
}

// ---------------------------------------------------------------------------
// Sweep
// ---------------------------------------------------------------------------

enum class SweepModes { Correlated, Multiplicative, Both };

struct SweepOptions {
  SweepModes modes = SweepModes::Both;
  Vec2 r_perp{0.0, 0.0};
  double applicability_floor = 5.0;
  SigmaEvalOptions eval{};
};

struct SweepResult {
  std::vector<SigmaCurvePoint> points;
  std::vector<std::string> warnings;
  bool all_converged = true;
};

inline SweepResult sweep(const std::vector<double>& z_list, const BeamParams& beam,
                         const TurbulenceParams& turb, const IntegrationConfig& cfg,
                         const SweepOptions& opt = {}) {
  cfg.validate();
  beam.validate();
  turb.validate();
  for (std::size_t i = 1; i < z_list.size(); ++i)
    if (!(z_list[i] > z_list[i - 1])) throw std::invalid_argument("sweep: z list must be strictly increasing");
  for (double z : z_list)
    if (!(z > 0.0)) throw std::invalid_argument("sweep: z values must be > 0");

  SweepResult out;
  out.points.resize(z_list.size());
  if (z_list.empty()) return out;

  for (double z : z_list) {
    if (turb.cn2 > 0.0 && applicability_ratio(z, beam, turb) < opt.applicability_floor) {
      out.warnings.push_back("z = " + std::to_string(z) +
                             " m is below the applicability floor (momentum-spread ratio " +
                             std::to_string(applicability_ratio(z, beam, turb)) + " < " +
                             std::to_string(opt.applicability_floor) + "); trajectory picture unreliable");
    }
  }

  struct Task {
    std::size_t point;
    KernelMode mode;
  };
  std::vector<Task> tasks;
  for (std::size_t i = 0; i < z_list.size(); ++i) {
    if (opt.modes != SweepModes::Multiplicative) tasks.push_back({i, KernelMode::Correlated});
    if (opt.modes != SweepModes::Correlated) tasks.push_back({i, KernelMode::Multiplicative});
  }

  for (std::size_t i = 0; i < z_list.size(); ++i) {
    SigmaCurvePoint& pt = out.points[i];
    pt.z = z_list[i];
    pt.mean_intensity = mean_intensity({z_list[i], opt.r_perp, KernelMode::Correlated}, beam, turb);
    pt.dq2 = momentum_diffusion(z_list[i], beam, turb);
    pt.beam_radius_sq = beam_radius_sq(z_list[i], beam, turb);
    pt.applicability_ratio = turb.cn2 > 0.0 ? applicability_ratio(z_list[i], beam, turb) : 0.0;
  }

  std::vector<Sigma2Result> results(tasks.size());
  // One kernel context shared by all tasks (read-only).
  const KernelContext ctx(turb, beam);
  parallel_for(static_cast<std::int64_t>(tasks.size()), cfg.workers, [&](std::int64_t t) {
    const Task& task = tasks[static_cast<std::size_t>(t)];
    PropagationQuery q{z_list[task.point], opt.r_perp, task.mode};
    IntegrationConfig sub = cfg;
    sub.workers = 1;  // parallelism lives at the task level
    try {
      if (sub.method == IntegrationMethod::AdaptiveProduct)
        results[static_cast<std::size_t>(t)] = detail::sigma2_reduced(q, ctx, sub, opt.eval);
      else
        results[static_cast<std::size_t>(t)] = detail::sigma2_sampling(q, ctx, sub, opt.eval);
    } catch (const std::exception&) {
      results[static_cast<std::size_t>(t)] = Sigma2Result{};  // NaN sigma2, converged = false
    }
  });

  for (std::size_t t = 0; t < tasks.size(); ++t) {
    SigmaCurvePoint& pt = out.points[tasks[t].point];
    const Sigma2Result& r = results[t];
    if (tasks[t].mode == KernelMode::Correlated) {
      pt.sigma2_correlated = r.sigma2;
      pt.err_sigma2_corr = r.error_estimate;
    } else {
      pt.sigma2_multiplicative = r.sigma2;
      pt.err_sigma2_mult = r.error_estimate;
    }
    pt.converged = pt.converged && r.converged;
    out.all_converged = out.all_converged && r.converged;
  }
  return out;
}

}  // namespace scint
