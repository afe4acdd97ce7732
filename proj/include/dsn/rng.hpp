#pragma once

#include <cmath>
#include <cstdint>

namespace dsn {

// SplitMix64 (Steele, Lea & Flood). The i-th output is a pure function of
// (seed, i), which makes every stream reproducible across runs and platforms
// without depending on the standard library's distributions.
class SplitMix64 {
 public:
  explicit SplitMix64(uint64_t seed) : state_(seed) {}

  static uint64_t mix(uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    return mix(state_);
  }

  // Uniform in [0, 1) with 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Unbiased-enough integer in [0, n); n is tiny relative to 2^64 everywhere
  // this is used, so plain scaling is fine.
  uint64_t below(uint64_t n) {
    return static_cast<uint64_t>(static_cast<__uint128_t>(next_u64()) * n >> 64);
  }

  // Standard normal draw, Marsaglia polar method (one value per call).
  double normal() {
    for (;;) {
      double u = uniform(-1.0, 1.0);
      double v = uniform(-1.0, 1.0);
      double s = u * u + v * v;
      if (s > 0.0 && s < 1.0) return u * std::sqrt(-2.0 * std::log(s) / s);
    }
  }

  // Independent substream keyed by (current state, tag).
  SplitMix64 fork(uint64_t tag) const {
    return SplitMix64(mix(state_ ^ mix(tag + 0x9e3779b97f4a7c15ULL)));
  }

 private:
  uint64_t state_;
};

}  // namespace dsn
