#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace vrnmt {

// Deterministic xoshiro256** generator with hand-rolled distributions.
// std::*_distribution is implementation-defined, so everything that must
// reproduce bit-for-bit across toolchains goes through this class.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    // splitmix64 seeding, as recommended for the xoshiro family
    std::uint64_t x = seed;
    for (auto& w : s_) {
      x += 0x9e3779b97f4a7c15ULL;
      std::uint64_t z = x;
      z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
      z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
      w = z ^ (z >> 31);
    }
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // uniform in [0, 1), 53-bit resolution
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // inclusive bounds
  int uniform_int(int lo, int hi) {
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(next_u64() % span);
  }

  // standard normal via Box-Muller, second value cached
  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    cached_ = r * std::sin(a);
    has_cached_ = true;
    return r * std::cos(a);
  }

  void fill_normal(std::vector<double>& out) {
    for (auto& v : out) v = normal();
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = next_u64() % i;
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }
  std::uint64_t s_[4]{};
  double cached_ = 0.0;
  bool has_cached_ = false;
};

// Purpose tags for deriving independent streams from one master seed.
enum class RngUse : std::uint64_t {
  init = 1,
  dropout = 2,
  epsilon = 3,
  shuffle = 4,
  bootstrap = 5,
  corpus = 6,
  prior_noise = 7,
};

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag,
                              std::uint64_t salt = 0) {
  // splitmix64 over the combined words
  std::uint64_t z = seed ^ (tag * 0x9e3779b97f4a7c15ULL) ^
                    (salt * 0xd1b54a32d192ed03ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t seed, RngUse use,
                              std::uint64_t salt = 0) {
  return mix_seed(seed, static_cast<std::uint64_t>(use), salt);
}

// Expands a single 64-bit seed into per-purpose streams so partial pipelines
// stay reproducible.
class RngPool {
 public:
  explicit RngPool(std::uint64_t master) : master_(master) {}
  Rng stream(RngUse use, std::uint64_t salt = 0) const {
    return Rng(mix_seed(master_, static_cast<std::uint64_t>(use), salt));
  }
  std::uint64_t master() const { return master_; }

 private:
  std::uint64_t master_;
};

}  // namespace vrnmt
