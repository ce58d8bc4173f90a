#pragma once

// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
// A sample is a pure function of (key, counter), so parallel partitioning of
// work cannot change the stream. Used everywhere reproducibility across
// worker counts is required.

#include <array>
#include <cmath>
#include <cstdint>

namespace scint {

class Philox4x32 {
 public:
  using Counter = std::array<std::uint32_t, 4>;

  explicit Philox4x32(std::uint64_t seed)
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)} {}

  /// 128 bits of output for a 128-bit counter.
  Counter operator()(Counter ctr) const {
    std::uint32_t k0 = key_[0];
    std::uint32_t k1 = key_[1];
    for (int round = 0; round < 10; ++round) {
      ctr = one_round(ctr, k0, k1);
      k0 += kWeyl0;
      k1 += kWeyl1;
    }
    return ctr;
  }

  /// Convenience: counter built from up to four stream indices.
  Counter operator()(std::uint64_t i0, std::uint64_t i1 = 0) const {
    return (*this)({static_cast<std::uint32_t>(i0), static_cast<std::uint32_t>(i0 >> 32),
                    static_cast<std::uint32_t>(i1), static_cast<std::uint32_t>(i1 >> 32)});
  }

  /// Two uniforms in (0,1) from one counter tick (53-bit mantissas).
  std::array<double, 2> uniform2(std::uint64_t i0, std::uint64_t i1 = 0) const {
    const Counter r = (*this)(i0, i1);
    return {to_unit(r[0], r[1]), to_unit(r[2], r[3])};
  }

  /// Two standard normals (Box-Muller) from one counter tick.
  std::array<double, 2> normal2(std::uint64_t i0, std::uint64_t i1 = 0) const {
    const auto u = uniform2(i0, i1);
    const double rad = std::sqrt(-2.0 * std::log(u[0]));
    const double ang = 2.0 * M_PI * u[1];
    return {rad * std::cos(ang), rad * std::sin(ang)};
  }

 private:
  static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
  static constexpr std::uint32_t kMul0 = 0xD2511F53u;
  static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;

  static Counter one_round(const Counter& c, std::uint32_t k0, std::uint32_t k1) {
    const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * c[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * c[2];
    const auto lo0 = static_cast<std::uint32_t>(p0);
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const auto lo1 = static_cast<std::uint32_t>(p1);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
    return {hi1 ^ c[1] ^ k0, lo1, hi0 ^ c[3] ^ k1, lo0};
  }

  static double to_unit(std::uint32_t a, std::uint32_t b) {
    // 53 significant bits, strictly inside (0,1).
    const std::uint64_t m = (static_cast<std::uint64_t>(a) << 21) ^ (static_cast<std::uint64_t>(b) >> 11);
    return (static_cast<double>(m & ((1ull << 53) - 1)) + 0.5) * 0x1p-53;
  }

  std::array<std::uint32_t, 2> key_;
};

}  // namespace scint
