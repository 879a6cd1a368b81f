#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace showthru {

/// SplitMix64 finalizer. Used as the engine step of Rng and for seed hashing.
inline uint64_t mix64(uint64_t x) {
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline uint64_t fnv1a64(std::string_view s) {
  uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return h;
}

/// Named sub-seed fan-out: one master seed yields an independent stream per
/// label.  sub = mix64(master XOR fnv1a64(label)).
inline uint64_t derive_seed(uint64_t master, std::string_view label) {
  return mix64(master ^ fnv1a64(label));
}

/// Stateless counter-based draw: independent of evaluation order, so
/// per-pixel noise is identical whether pixels are visited sequentially
/// or in parallel.
inline uint64_t hash_at(uint64_t seed, uint64_t counter) {
  return mix64(seed ^ mix64(counter + 0x9E3779B97F4A7C15ull));
}

/// Standard normal variate addressed by (seed, index), via Box-Muller.
inline double gaussian_at(uint64_t seed, uint64_t index) {
  constexpr double kTwoPi = 6.283185307179586476925286766559;
  const uint64_t r1 = hash_at(seed, 2 * index);
  const uint64_t r2 = hash_at(seed, 2 * index + 1);
  const double u1 = double((r1 >> 11) + 1) * 0x1.0p-53;  // (0,1]
  const double u2 = double(r2 >> 11) * 0x1.0p-53;        // [0,1)
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
}

/// Deterministic sequential generator (SplitMix64 stream).  Self-contained so
/// results do not depend on the standard library's distribution
/// implementations.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() { return mix64(state_ += 0x9E3779B97F4A7C15ull); }

  /// Uniform in [0,1).
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Unbiased uniform integer in [0, n), n > 0 (Lemire's method).
  uint64_t below(uint64_t n) {
    while (true) {
      const uint64_t x = next_u64();
      const __uint128_t m = __uint128_t(x) * n;
      const uint64_t lo = uint64_t(m);
      if (lo < n) {
        const uint64_t threshold = -n % n;
        if (lo < threshold) continue;
      }
      return uint64_t(m >> 64);
    }
  }

  /// Standard normal via Box-Muller (two draws per call, no caching).
  double gaussian() {
    constexpr double kTwoPi = 6.283185307179586476925286766559;
    const double u1 = 1.0 - uniform();  // (0,1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
  }

 private:
  uint64_t state_;
};

}  // namespace showthru
