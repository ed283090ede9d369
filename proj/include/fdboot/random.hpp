#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace fdboot {

// SplitMix64 finalizer (Steele, Lea & Flood). A bijection on 64-bit words.
constexpr std::uint64_t splitmix64(std::uint64_t z) noexcept {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// child(master, b) = splitmix64(master XOR splitmix64(b + 0x632BE59BD9B4E019)).
// For a fixed master the map b -> child is injective, so distinct indices get
// distinct streams. This derivation is part of the output contract: changing
// it changes every recorded p-value.
constexpr std::uint64_t child_seed(std::uint64_t master, std::uint64_t index) noexcept {
  return splitmix64(master ^ splitmix64(index + 0x632BE59BD9B4E019ULL));
}

struct SeedSpec {
  std::uint64_t master_seed = 0;

  std::uint64_t child(std::uint64_t index) const noexcept { return child_seed(master_seed, index); }
  SeedSpec derive(std::uint64_t index) const noexcept { return SeedSpec{child(index)}; }
};

// Random stream on top of mt19937_64. The samplers are written out here rather
// than taken from <random> distributions, whose algorithms differ between
// standard libraries; the draws are therefore identical on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Uniform on {0, ..., n-1} by rejection; n >= 1.
  std::uint64_t uniform_index(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % n);
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  // Standard normal, Marsaglia polar method.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double factor = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * factor;
    has_spare_ = true;
    return u * factor;
  }

  // Student t with `dof` degrees of freedom: Z / sqrt(chi2_dof / dof), the
  // chi-square built from `dof` further normals of the same stream.
  double student_t(int dof) {
    const double z = normal();
    double chi2 = 0.0;
    for (int k = 0; k < dof; ++k) {
      const double g = normal();
      chi2 += g * g;
    }
    return z / std::sqrt(chi2 / dof);
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace fdboot
