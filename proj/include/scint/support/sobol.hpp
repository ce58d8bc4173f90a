#pragma once

// Sobol low-discrepancy sequence, up to 13 dimensions (direction numbers from
// the Joe-Kuo table). Point i is generated directly from the bits of i, so the
// sequence can be partitioned across workers without changing it.

#include <array>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace scint {

class Sobol {
 public:
  static constexpr int kMaxDim = 13;
  static constexpr int kBits = 52;

  explicit Sobol(int dim) : dim_(dim), v_(static_cast<std::size_t>(dim) * kBits) {
    if (dim < 1 || dim > kMaxDim) throw std::invalid_argument("Sobol: dim must be in [1,13]");
    // Dimension 0: van der Corput in base 2.
    for (int b = 0; b < kBits; ++b) v_[b] = 1ull << (kBits - 1 - b);
    for (int d = 1; d < dim; ++d) {
      const int s = kS[d - 1];
      const std::uint32_t a = kA[d - 1];
      std::array<std::uint64_t, kBits> m{};
      for (int i = 0; i < s; ++i) m[i] = kM[d - 1][i];
      for (int i = s; i < kBits; ++i) {
        std::uint64_t mi = m[i - s] ^ (m[i - s] << s);
        for (int k = 1; k < s; ++k) {
          if ((a >> (s - 1 - k)) & 1u) mi ^= m[i - k] << k;
        }
        m[i] = mi;
      }
      for (int b = 0; b < kBits; ++b) v_[static_cast<std::size_t>(d) * kBits + b] = m[b] << (kBits - 1 - b);
    }
  }

  int dim() const { return dim_; }

  /// Writes point #index (Gray-code free, direct XOR of direction numbers).
  void point(std::uint64_t index, double* out) const {
    for (int d = 0; d < dim_; ++d) {
      std::uint64_t x = 0;
      std::uint64_t i = index;
      const std::uint64_t* vd = v_.data() + static_cast<std::size_t>(d) * kBits;
      int b = 0;
      while (i != 0 && b < kBits) {
        if (i & 1ull) x ^= vd[b];
        i >>= 1;
        ++b;
      }
      out[d] = static_cast<double>(x) * 0x1p-52;
    }
  }

 private:
  // Joe-Kuo "new-joe-kuo-6" table head: degree s, coefficient a, initial m_i
  // for dimensions 2..13.
  static constexpr int kS[kMaxDim - 1] = {1, 2, 3, 3, 4, 4, 5, 5, 5, 5, 5, 5};
  static constexpr std::uint32_t kA[kMaxDim - 1] = {0, 1, 1, 2, 1, 4, 2, 4, 7, 11, 13, 14};
  static constexpr std::uint64_t kM[kMaxDim - 1][5] = {
      {1, 0, 0, 0, 0}, {1, 3, 0, 0, 0}, {1, 3, 1, 0, 0},  {1, 1, 1, 0, 0},
      {1, 1, 3, 3, 0}, {1, 3, 5, 13, 0}, {1, 1, 5, 5, 17}, {1, 1, 5, 5, 5},
      {1, 1, 7, 11, 19}, {1, 1, 5, 1, 1}, {1, 1, 1, 3, 11}, {1, 3, 5, 5, 31}};

  int dim_;
  std::vector<std::uint64_t> v_;
};

}  // namespace scint
