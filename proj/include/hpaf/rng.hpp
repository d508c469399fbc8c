#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

namespace hpaf {

/// Deterministic RNG with hand-rolled distributions so that streams are
/// reproducible bit-for-bit regardless of standard-library internals.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ull) {}

  uint64_t next_u64() {
    // splitmix64
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1).
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [lo, hi], inclusive.
  int64_t uniform_int(int64_t lo, int64_t hi) {
    uint64_t span = uint64_t(hi - lo) + 1;
    return lo + int64_t(next_u64() % span);
  }

  /// Standard normal via Box-Muller.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    while (u1 <= 1e-300) u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(6.283185307179586476925286766559 * u2);
    has_spare_ = true;
    return r * std::cos(6.283185307179586476925286766559 * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = size_t(uniform_int(0, int64_t(i) - 1));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Derives a child seed from a root seed and a label, so every module draws
/// from an independent deterministic stream.
inline uint64_t derive_seed(uint64_t root, std::string_view label) {
  uint64_t h = 1469598103934665603ull;  // FNV-1a
  for (char c : label) {
    h ^= uint64_t(uint8_t(c));
    h *= 1099511628211ull;
  }
  Rng mix(root ^ h);
  return mix.next_u64();
}

inline uint64_t derive_seed(uint64_t root, std::string_view label, uint64_t index) {
  return derive_seed(derive_seed(root, label) ^ (0x517cc1b727220a95ull * (index + 1)),
                     label);
}

}  // namespace hpaf
