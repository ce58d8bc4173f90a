#pragma once

// Independent verification path: synthesize Gaussian random force fields with
// the target spectral tensor, integrate photon trajectories through them, and
// estimate the correlation functionals and the momentum diffusion directly.
//
// The longitudinal structure is a stack of statistically independent slabs
// (the kernels' delta-correlated-in-z limit). Within a slab the transverse
// force field is a periodic FFT grid plus a hierarchy of subharmonic modes
// that carry the below-grid part of the spectrum; without them the g^(-2/3)
// weight of the momentum-diffusion integrand loses ~30% of its mass at any
// feasible grid extent. The force is the gradient of a synthesized scalar, so
// the rank-1 spectral tensor g_a g_b psi(g) is exact by construction.

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <mutex>
#include <ostream>
#include <stdexcept>
#include <vector>

#include "scint/beam_source.hpp"
#include "scint/support/parallel.hpp"
#include "scint/support/philox.hpp"
#include "scint/support/special.hpp"
#include "scint/support/vec2.hpp"
#include "scint/trajectory_kernel.hpp"
#include "scint/turbulence.hpp"

namespace scint::mc {

struct FieldGrid {
  double extent = 0.4;          ///< transverse box side, m
  int n = 256;                  ///< grid points per side (power of two)
  double slab_thickness = 0.0;  ///< m; 0 = default 5*l0
  int subharmonic_levels = 9;

  double slab(const TurbulenceParams& turb) const {
    return slab_thickness > 0.0 ? slab_thickness : 5.0 * turb.l0;
  }

  void validate(const TurbulenceParams& turb) const {
    if (n < 8 || (n & (n - 1)) != 0) throw std::invalid_argument("field grid: n must be a power of two >= 8");
    const double h = extent / n;
    if (h > turb.l0 / 4.0)
      throw std::invalid_argument("field grid too coarse: spacing must be <= l0/4 (raise n or shrink extent)");
    if (extent < 50.0 * turb.l0)
      throw std::invalid_argument("field grid extent must be >= 50*l0");
    if (subharmonic_levels < 0 || subharmonic_levels > 16)
      throw std::invalid_argument("field grid: subharmonic_levels must be in [0,16]");
  }
};

namespace detail {

/// One cached in-place backward plan per grid size, created unaligned so it
/// can execute on any buffer; fftw_execute_dft on distinct buffers is
/// thread-safe.
inline fftw_plan cached_plan(int n) {
  static std::mutex mu;
  static std::vector<std::pair<int, fftw_plan>> plans;
  std::lock_guard<std::mutex> lock(mu);
  for (const auto& p : plans)
    if (p.first == n) return p.second;
  std::vector<std::complex<double>> scratch(static_cast<std::size_t>(n) * n);
  fftw_plan plan = fftw_plan_dft_2d(n, n, reinterpret_cast<fftw_complex*>(scratch.data()),
                                    reinterpret_cast<fftw_complex*>(scratch.data()), FFTW_BACKWARD,
                                    FFTW_ESTIMATE | FFTW_UNALIGNED);
  plans.emplace_back(n, plan);
  return plan;
}

/// 2-D Gauss-Legendre integral of f over [ax,bx] x [ay,by].
template <typename F>
double cell_integral(F&& f, double ax, double bx, double ay, double by, int order) {
  static thread_local std::vector<double> x, w;
  static thread_local int cached = 0;
  if (cached != order) {
    gauss_legendre(order, x, w);
    cached = order;
  }
  double acc = 0.0;
  for (int i = 0; i < order; ++i) {
    const double gx = 0.5 * (ax + bx) + 0.5 * (bx - ax) * x[static_cast<std::size_t>(i)];
    for (int j = 0; j < order; ++j) {
      const double gy = 0.5 * (ay + by) + 0.5 * (by - ay) * x[static_cast<std::size_t>(j)];
      acc += w[static_cast<std::size_t>(i)] * w[static_cast<std::size_t>(j)] * f(gx, gy);
    }
  }
  return acc * 0.25 * (bx - ax) * (by - ay);
}

}  // namespace detail

/// Spectrum sampling plan shared by all realizations of one configuration:
/// per-mode variances of the scalar potential, sized so the force variance
/// (the g^2-weighted spectrum) is exact per spectral cell.
class SpectrumPlan {
 public:
  SpectrumPlan(const TurbulenceParams& turb, const BeamParams& beam, const FieldGrid& grid)
      : turb_(turb), q0_(beam.q0), grid_(grid) {
    grid.validate(turb);
    const int n = grid.n;
    const double dz = grid.slab(turb);
    const double dg = 2.0 * M_PI / grid.extent;
    dg_ = dg;
    // Scalar-potential spectral density S(g) = (2 pi / dz) psi(g); force is
    // q0 * grad, so the per-mode variance uses the g^2-weighted cell mass.
    auto g2s = [&](double gx, double gy) {
      const double g = std::hypot(gx, gy);
      if (g == 0.0) return 0.0;
      return (g * g) * (2.0 * M_PI / dz) * spectrum_psi(g, turb_);
    };

    var_.assign(static_cast<std::size_t>(n) * n, 0.0);
    const int half = n / 2;
    for (int ky = -half + 1; ky < half; ++ky) {
      for (int kx = -half + 1; kx < half; ++kx) {
        if (kx == 0 && ky == 0) continue;
        const double gx = kx * dg, gy = ky * dg;
        const double g2 = gx * gx + gy * gy;
        double mass;
        if (std::abs(kx) <= 8 && std::abs(ky) <= 8) {
          // Exact cell integral near the origin where the spectrum is steep.
          mass = detail::cell_integral(g2s, gx - 0.5 * dg, gx + 0.5 * dg, gy - 0.5 * dg, gy + 0.5 * dg, 8);
        } else {
          mass = g2s(gx, gy) * dg * dg;
        }
        var_[idx(kx, ky, n)] = mass / g2;
      }
    }

    // Subharmonic hierarchy: levels of 3x3 cells refining the central cell
    // [-dg/2, dg/2]^2; four half-plane cells per level (cos/sin pairs cover
    // the +-g doubling), the deepest central cell is the documented residual.
    for (int lvl = 1; lvl <= grid.subharmonic_levels; ++lvl) {
      const double w = dg / std::pow(3.0, lvl);
      static constexpr int cells[4][2] = {{1, 0}, {1, 1}, {0, 1}, {-1, 1}};
      for (const auto& c : cells) {
        const double gx = c[0] * w, gy = c[1] * w;
        const int split = (lvl == grid.subharmonic_levels) ? 4 : 2;
        double mass = 0.0;
        // Subdivide the cell for accuracy against the g^(-5/3) steepness.
        for (int sx = 0; sx < split; ++sx)
          for (int sy = 0; sy < split; ++sy)
            mass += detail::cell_integral(g2s, gx - 0.5 * w + sx * w / split, gx - 0.5 * w + (sx + 1) * w / split,
                                          gy - 0.5 * w + sy * w / split, gy - 0.5 * w + (sy + 1) * w / split, 8);
        SubMode m;
        m.g = Vec2{gx, gy};
        m.sigma = std::sqrt(2.0 * mass / (gx * gx + gy * gy));
        sub_.push_back(m);
      }
    }

    // Half-plane enumeration with precomputed spectral force factors.
    auto bspline_ft = [n](int k) {
      const double u = 2.0 * M_PI * k / n;
      return (2.0 + std::cos(u)) / 3.0;
    };
    for (int ky = 0; ky < half; ++ky) {
      for (int kx = -half + 1; kx < half; ++kx) {
        if (ky == 0 && kx <= 0) continue;
        const double var = var_[idx(kx, ky, n)];
        if (var == 0.0) continue;
        ModeEntry e;
        e.mode_id = static_cast<std::uint32_t>(ky + half) * static_cast<std::uint32_t>(n) +
                    static_cast<std::uint32_t>(kx + half);
        e.idx_pos = idx(kx, ky, n);
        e.idx_neg = idx(-kx, -ky, n);
        const double gx = kx * dg, gy = ky * dg;
        const double pre = std::sqrt(0.5 * var) / (bspline_ft(kx) * bspline_ft(ky));
        e.fx = std::complex<double>{0.0, q0_ * gx * pre};
        e.fy = std::complex<double>{0.0, q0_ * gy * pre};
        modes_.push_back(e);
      }
    }
  }

  /// Force variance carried by the discretization (per unit path * 1/(2 pi q0^2)),
  /// for the residual-budget test: should approach 2 pi J3 = int d2g g^2 psi / ... .
  double represented_force_mass() const {
    double acc = 0.0;
    const int n = grid_.n;
    const int half = n / 2;
    for (int ky = -half + 1; ky < half; ++ky)
      for (int kx = -half + 1; kx < half; ++kx) {
        if (kx == 0 && ky == 0) continue;
        const double gx = kx * dg_, gy = ky * dg_;
        acc += var_[idx(kx, ky, n)] * (gx * gx + gy * gy);
      }
    for (const auto& m : sub_) acc += m.sigma * m.sigma * m.g.norm_sq();
    return acc;
  }

  struct SubMode {
    Vec2 g;
    double sigma = 0.0;
  };

  /// Half-plane mode list with premultiplied force spectral factors
  /// (i q0 g * spline prefilter * sqrt(var/2)), consumed by the per-slab fill.
  struct ModeEntry {
    std::uint32_t mode_id;
    std::size_t idx_pos, idx_neg;
    std::complex<double> fx, fy;
  };
  const std::vector<ModeEntry>& modes() const { return modes_; }

  const TurbulenceParams& turb() const { return turb_; }
  const FieldGrid& grid() const { return grid_; }
  double q0() const { return q0_; }
  double dg() const { return dg_; }
  double mode_variance(int kx, int ky) const { return var_[idx(kx, ky, grid_.n)]; }
  const std::vector<SubMode>& subharmonics() const { return sub_; }

  static std::size_t idx(int kx, int ky, int n) {
    const int ux = kx >= 0 ? kx : kx + n;
    const int uy = ky >= 0 ? ky : ky + n;
    return static_cast<std::size_t>(uy) * static_cast<std::size_t>(n) + static_cast<std::size_t>(ux);
  }

 private:
  TurbulenceParams turb_;
  double q0_ = 0.0;
  FieldGrid grid_;
  double dg_ = 0.0;
  std::vector<double> var_;
  std::vector<SubMode> sub_;
  std::vector<ModeEntry> modes_;
};

/// One slab's force field: periodic grid samples of (f_x, f_y) plus the
/// subharmonic mode amplitudes, with cubic B-spline sampling in between
/// (the spline prefilter is applied spectrally, so grid samples are exact).
class FieldRealization {
 public:
  FieldRealization(const SpectrumPlan& plan, std::uint64_t seed, std::uint64_t realization, std::uint64_t slab)
      : plan_(&plan), n_(plan.grid().n), extent_(plan.grid().extent) {
    const int n = n_;
    std::vector<std::complex<double>> spec(static_cast<std::size_t>(n) * n, {0.0, 0.0});
    const Philox4x32 rng(seed);
    const std::uint64_t stream_hi = (realization << 32) | (slab & 0xFFFFFFFFull);

    // Hermitian half-plane fill from the precomputed factors; packing
    // f_x + i f_y yields both real fields from one transform.
    for (const auto& e : plan.modes()) {
      const auto nrm = rng.normal2(stream_hi, e.mode_id);
      const std::complex<double> c{nrm[0], nrm[1]};
      const std::complex<double> fx = e.fx * c;
      const std::complex<double> fy = e.fy * c;
      spec[e.idx_pos] = fx + std::complex<double>{0.0, 1.0} * fy;
      spec[e.idx_neg] = std::conj(fx) + std::complex<double>{0.0, 1.0} * std::conj(fy);
    }

    fftw_execute_dft(detail::cached_plan(n), reinterpret_cast<fftw_complex*>(spec.data()),
                     reinterpret_cast<fftw_complex*>(spec.data()));
    fx_.resize(spec.size());
    fy_.resize(spec.size());
    for (std::size_t i = 0; i < spec.size(); ++i) {
      fx_[i] = spec[i].real();
      fy_[i] = spec[i].imag();
    }

    // Subharmonic amplitudes (scalar-potential cos/sin pairs per mode).
    const auto& subs = plan.subharmonics();
    sub_a_.resize(subs.size());
    sub_b_.resize(subs.size());
    for (std::size_t m = 0; m < subs.size(); ++m) {
      const auto nrm = rng.normal2(stream_hi, 0x80000000ull + m);
      sub_a_[m] = nrm[0] * subs[m].sigma;
      sub_b_[m] = nrm[1] * subs[m].sigma;
    }
  }

  /// Force at an arbitrary transverse point: periodic cubic B-spline over the
  /// grid part (prefiltered: exact at grid nodes) plus the smooth subharmonic
  /// sum evaluated at the unwrapped position.
  Vec2 force(Vec2 r) const { return grid_force(r) + subharmonic_force(r); }

  Vec2 grid_force(Vec2 r) const {
    const double h = extent_ / n_;
    const double x = r.x / h, y = r.y / h;
    const double fx = std::floor(x), fy = std::floor(y);
    const int ix = static_cast<int>(fx), iy = static_cast<int>(fy);
    const double tx = x - fx, ty = y - fy;
    double wx[4], wy[4];
    bspline_weights(tx, wx);
    bspline_weights(ty, wy);
    double ax = 0.0, ay = 0.0;
    for (int j = -1; j <= 2; ++j) {
      const int yy = wrap(iy + j);
      double rx = 0.0, ry = 0.0;
      for (int i = -1; i <= 2; ++i) {
        const int xx = wrap(ix + i);
        const std::size_t id = static_cast<std::size_t>(yy) * static_cast<std::size_t>(n_) + static_cast<std::size_t>(xx);
        rx += wx[i + 1] * fx_[id];
        ry += wx[i + 1] * fy_[id];
      }
      ax += wy[j + 1] * rx;
      ay += wy[j + 1] * ry;
    }
    return {ax, ay};
  }

  /// The below-grid modes; they vary on scales far beyond one slab's drift,
  /// so integrators may sample them once per slab.
  Vec2 subharmonic_force(Vec2 r) const {
    const auto& subs = plan_->subharmonics();
    const double q0 = plan_->q0();
    double ax = 0.0, ay = 0.0;
    for (std::size_t m = 0; m < subs.size(); ++m) {
      const double ph = subs[m].g.dot(r);
      const double amp = q0 * (-sub_a_[m] * std::sin(ph) + sub_b_[m] * std::cos(ph));
      ax += amp * subs[m].g.x;
      ay += amp * subs[m].g.y;
    }
    return {ax, ay};
  }

  int n() const { return n_; }
  double extent() const { return extent_; }
  double grid_fx(int ix, int iy) const { return fx_[static_cast<std::size_t>(iy) * static_cast<std::size_t>(n_) + static_cast<std::size_t>(ix)]; }
  double grid_fy(int ix, int iy) const { return fy_[static_cast<std::size_t>(iy) * static_cast<std::size_t>(n_) + static_cast<std::size_t>(ix)]; }

 private:
  static void bspline_weights(double t, double* w) {
    const double t2 = t * t, t3 = t2 * t;
    w[0] = (1.0 - 3.0 * t + 3.0 * t2 - t3) / 6.0;
    w[1] = (4.0 - 6.0 * t2 + 3.0 * t3) / 6.0;
    w[2] = (1.0 + 3.0 * t + 3.0 * t2 - 3.0 * t3) / 6.0;
    w[3] = t3 / 6.0;
  }
  int wrap(int i) const {
    i %= n_;
    return i < 0 ? i + n_ : i;
  }

  const SpectrumPlan* plan_;
  int n_;
  double extent_;
  std::vector<double> fx_, fy_;
  std::vector<double> sub_a_, sub_b_;
};

// ---------------------------------------------------------------------------
// Trajectories
// ---------------------------------------------------------------------------

struct Photon {
  Vec2 r;
  Vec2 q;
};

struct TrajectoryRecord {
  std::vector<double> z;
  std::vector<Photon> state;
};

/// Paraxial leapfrog through one slab (force frozen per slab, substeps of at
/// most l0/4 along the path): dr/dz = q/q0, dq/dz = f(r). direction = -1
/// integrates toward the source (used by the detector-anchored estimators).
inline void propagate_slab(Photon& ph, const FieldRealization& field, double slab, double l0, double q0,
                           int direction) {
  const int nsub = std::max(1, static_cast<int>(std::ceil(slab / (0.25 * l0))));
  const double ds = direction * slab / nsub;
  const Vec2 coarse = field.subharmonic_force(ph.r);
  for (int s = 0; s < nsub; ++s) {
    ph.r += ph.q * (0.5 * ds / q0);
    ph.q += (field.grid_force(ph.r) + coarse) * ds;
    ph.r += ph.q * (0.5 * ds / q0);
  }
}

struct EnsembleStats {
  double mean = 0.0;
  double std_error = 0.0;
  std::int64_t samples = 0;
};

struct OracleConfig {
  FieldGrid grid{};
  std::uint64_t seed = 1;
  int workers = 0;
  int realizations = 64;
  int photons_per_realization = 128;
};

/// Ensemble <|dq|^2> at path z: photons launched at uniform positions with
/// source-width momenta, forward-propagated through independent slabs.
/// Standard error from between-realization scatter (photons sharing a
/// realization are correlated through the large-scale modes).
inline EnsembleStats estimate_dq2(const TurbulenceParams& turb, const BeamParams& beam, double z,
                                  const OracleConfig& cfg) {
  const SpectrumPlan plan(turb, beam, cfg.grid);
  const double slab = cfg.grid.slab(turb);
  const auto n_slabs = static_cast<std::int64_t>(std::ceil(z / slab));
  const double r1 = beam.r1();

  std::vector<double> real_mean(static_cast<std::size_t>(cfg.realizations), 0.0);
  parallel_for(cfg.realizations, cfg.workers, [&](std::int64_t rep) {
    const Philox4x32 rng(cfg.seed ^ 0x1234abcdULL);
    std::vector<Photon> photons(static_cast<std::size_t>(cfg.photons_per_realization));
    std::vector<Vec2> q_init(photons.size());
    for (std::size_t i = 0; i < photons.size(); ++i) {
      const auto u = rng.uniform2((1ull << 40) | static_cast<std::uint64_t>(rep), i);
      const auto nq = rng.normal2((2ull << 40) | static_cast<std::uint64_t>(rep), i);
      photons[i].r = {u[0] * cfg.grid.extent, u[1] * cfg.grid.extent};
      photons[i].q = {nq[0] / r1, nq[1] / r1};
      q_init[i] = photons[i].q;
    }
    for (std::int64_t s = 0; s < n_slabs; ++s) {
      const double ds = std::min(slab, z - static_cast<double>(s) * slab);
      const FieldRealization field(plan, cfg.seed, static_cast<std::uint64_t>(rep), static_cast<std::uint64_t>(s));
      for (auto& ph : photons) propagate_slab(ph, field, ds, turb.l0, beam.q0, +1);
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < photons.size(); ++i) acc += (photons[i].q - q_init[i]).norm_sq();
    real_mean[static_cast<std::size_t>(rep)] = acc / static_cast<double>(photons.size());
  });

  EnsembleStats out;
  for (double v : real_mean) out.mean += v;
  out.mean /= static_cast<double>(cfg.realizations);
  double var = 0.0;
  for (double v : real_mean) var += (v - out.mean) * (v - out.mean);
  var /= std::max(1, cfg.realizations - 1);
  out.std_error = std::sqrt(var / cfg.realizations);
  out.samples = static_cast<std::int64_t>(cfg.realizations) * cfg.photons_per_realization;
  return out;
}

/// Ensemble <|r|^2> of the beam at path z (diffraction + forced spreading),
/// for the mean-intensity radius cross-check.
inline EnsembleStats estimate_beam_radius_sq(const TurbulenceParams& turb, const BeamParams& beam, double z,
                                             const OracleConfig& cfg) {
  const SpectrumPlan plan(turb, beam, cfg.grid);
  const double slab = cfg.grid.slab(turb);
  const auto n_slabs = static_cast<std::int64_t>(std::ceil(z / slab));
  const double r1 = beam.r1();

  std::vector<double> real_mean(static_cast<std::size_t>(cfg.realizations), 0.0);
  parallel_for(cfg.realizations, cfg.workers, [&](std::int64_t rep) {
    const Philox4x32 rng(cfg.seed ^ 0x77aa55ULL);
    double acc = 0.0;
    std::vector<Photon> photons(static_cast<std::size_t>(cfg.photons_per_realization));
    std::vector<Vec2> origin(photons.size());
    for (std::size_t i = 0; i < photons.size(); ++i) {
      const auto u = rng.uniform2((1ull << 40) | static_cast<std::uint64_t>(rep), i);
      const auto nq = rng.normal2((2ull << 40) | static_cast<std::uint64_t>(rep), i);
      const auto nr = rng.normal2((3ull << 40) | static_cast<std::uint64_t>(rep), i);
      origin[i] = {u[0] * cfg.grid.extent, u[1] * cfg.grid.extent};
      // Source widths: position spread r0/2 per component, momentum 1/r1.
      photons[i].r = origin[i] + Vec2{nr[0] * beam.r0 * 0.5, nr[1] * beam.r0 * 0.5};
      photons[i].q = {nq[0] / r1, nq[1] / r1};
    }
    for (std::int64_t s = 0; s < n_slabs; ++s) {
      const double ds = std::min(slab, z - static_cast<double>(s) * slab);
      const FieldRealization field(plan, cfg.seed, static_cast<std::uint64_t>(rep), static_cast<std::uint64_t>(s));
      for (auto& ph : photons) propagate_slab(ph, field, ds, turb.l0, beam.q0, +1);
    }
    for (std::size_t i = 0; i < photons.size(); ++i) {
      // Drift of the free coordinate: r(z) = r + q z / q0.
      const Vec2 d = photons[i].r - origin[i];
      acc += d.norm_sq();
    }
    real_mean[static_cast<std::size_t>(rep)] = acc / static_cast<double>(photons.size());
  });

  EnsembleStats out;
  for (double v : real_mean) out.mean += v;
  out.mean /= static_cast<double>(cfg.realizations);
  double var = 0.0;
  for (double v : real_mean) var += (v - out.mean) * (v - out.mean);
  var /= std::max(1, cfg.realizations - 1);
  out.std_error = std::sqrt(var / cfg.realizations);
  out.samples = static_cast<std::int64_t>(cfg.realizations) * cfg.photons_per_realization;
  return out;
}

/// Direct sample estimate of phi_PP' (and phi_PP when P' == P): both
/// trajectories are anchored at the detector and integrated back to the
/// source through the same field sequence; the functional is the product of
/// the two accumulated weighted force line integrals.
inline EnsembleStats estimate_phi_pair(const PhasePoint& P, const PhasePoint& Pp, double z,
                                       const TurbulenceParams& turb, const BeamParams& beam,
                                       const OracleConfig& cfg, int pairs_per_realization = 24) {
  const SpectrumPlan plan(turb, beam, cfg.grid);
  const double slab = cfg.grid.slab(turb);
  const auto n_slabs = static_cast<std::int64_t>(std::ceil(z / slab));
  const double q0 = beam.q0;
  const bool same = (P.q - Pp.q).norm_sq() == 0.0 && (P.p - Pp.p).norm_sq() == 0.0 &&
                    (P.k - Pp.k).norm_sq() == 0.0;

  std::vector<double> real_mean(static_cast<std::size_t>(cfg.realizations), 0.0);
  parallel_for(cfg.realizations, cfg.workers, [&](std::int64_t rep) {
    const Philox4x32 rng(cfg.seed ^ 0x9e37ULL);
    const auto np = static_cast<std::size_t>(pairs_per_realization);
    std::vector<Photon> a(np), b(np);
    std::vector<double> accA(np, 0.0), accB(np, 0.0);
    for (std::size_t i = 0; i < np; ++i) {
      const auto u = rng.uniform2((1ull << 40) | static_cast<std::uint64_t>(rep), i);
      const Vec2 det_pos{u[0] * cfg.grid.extent, u[1] * cfg.grid.extent};
      a[i] = {det_pos, P.q};
      b[i] = {det_pos, Pp.q};
    }
    // March from the detector (zeta = z) back to the source (zeta = 0).
    for (std::int64_t s = n_slabs - 1; s >= 0; --s) {
      const double z_hi = std::min(z, static_cast<double>(s + 1) * slab);
      const double z_lo = static_cast<double>(s) * slab;
      const double ds = z_hi - z_lo;
      const double zeta_mid = 0.5 * (z_hi + z_lo);
      const FieldRealization field(plan, cfg.seed, static_cast<std::uint64_t>(rep), static_cast<std::uint64_t>(s));
      const Vec2 uP = P.p + P.k * (zeta_mid / q0);
      const Vec2 uPp = Pp.p + Pp.k * (zeta_mid / q0);
      for (std::size_t i = 0; i < np; ++i) {
        accA[i] += ds * uP.dot(field.force(a[i].r));
        propagate_slab(a[i], field, ds, turb.l0, q0, -1);
        if (same) {
          accB[i] = accA[i];
          b[i] = a[i];
        } else {
          accB[i] += ds * uPp.dot(field.force(b[i].r));
          propagate_slab(b[i], field, ds, turb.l0, q0, -1);
        }
      }
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < np; ++i) acc += accA[i] * accB[i];
    real_mean[static_cast<std::size_t>(rep)] = acc / static_cast<double>(np);
  });

  EnsembleStats out;
  for (double v : real_mean) out.mean += v;
  out.mean /= static_cast<double>(cfg.realizations);
  double var = 0.0;
  for (double v : real_mean) var += (v - out.mean) * (v - out.mean);
  var /= std::max(1, cfg.realizations - 1);
  out.std_error = std::sqrt(var / cfg.realizations);
  out.samples = static_cast<std::int64_t>(cfg.realizations) * pairs_per_realization;
  return out;
}

// ---------------------------------------------------------------------------
// Columnar text dumps for offline inspection
// ---------------------------------------------------------------------------

inline void dump_field(std::ostream& os, const FieldRealization& field, int stride = 1) {
  os << "# x_m y_m fx fy\n";
  const double h = field.extent() / field.n();
  for (int iy = 0; iy < field.n(); iy += stride)
    for (int ix = 0; ix < field.n(); ix += stride)
      os << ix * h << ' ' << iy * h << ' ' << field.grid_fx(ix, iy) << ' ' << field.grid_fy(ix, iy) << '\n';
}

inline TrajectoryRecord record_trajectory(const TurbulenceParams& turb, const BeamParams& beam, double z,
                                          const OracleConfig& cfg, Vec2 q_init, std::uint64_t photon_id) {
  const SpectrumPlan plan(turb, beam, cfg.grid);
  const double slab = cfg.grid.slab(turb);
  const auto n_slabs = static_cast<std::int64_t>(std::ceil(z / slab));
  const Philox4x32 rng(cfg.seed);
  const auto u = rng.uniform2(0xD1CEull, photon_id);
  TrajectoryRecord rec;
  Photon ph{{u[0] * cfg.grid.extent, u[1] * cfg.grid.extent}, q_init};
  rec.z.push_back(0.0);
  rec.state.push_back(ph);
  for (std::int64_t s = 0; s < n_slabs; ++s) {
    const double ds = std::min(slab, z - static_cast<double>(s) * slab);
    const FieldRealization field(plan, cfg.seed, photon_id, static_cast<std::uint64_t>(s));
    propagate_slab(ph, field, ds, turb.l0, beam.q0, +1);
    rec.z.push_back(std::min(z, static_cast<double>(s + 1) * slab));
    rec.state.push_back(ph);
  }
  return rec;
}

inline void dump_trajectory(std::ostream& os, const TrajectoryRecord& rec) {
  os << "# z_m rx_m ry_m qx_1/m qy_1/m\n";
  for (std::size_t i = 0; i < rec.z.size(); ++i)
    os << rec.z[i] << ' ' << rec.state[i].r.x << ' ' << rec.state[i].r.y << ' ' << rec.state[i].q.x << ' '
       << rec.state[i].q.y << '\n';
}

}  // namespace scint::mc
