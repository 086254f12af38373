#pragma once

#include <cstdint>

#include "tcace/math.hpp"

namespace tcace {

// Counter-free splittable RNG.  Every consumer derives its own stream from
// (seed, indices...) via fork(), so simulation output does not depend on the
// order in which trials or bootstrap replicates execute.
namespace rng {

inline std::uint64_t fmix64(std::uint64_t x) {
  x ^= x >> 33;
  x *= 0xff51afd7ed558ccdULL;
  x ^= x >> 33;
  x *= 0xc4ceb9fe1a85ec53ULL;
  x ^= x >> 33;
  return x;
}

struct Stream {
  std::uint64_t state = 0;

  // SplitMix64 step.
  std::uint64_t next() {
    state += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Child stream keyed by up to three indices.  Uses the current state as the
  // parent key; call it on freshly derived streams for reproducible layouts.
  Stream fork(std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) const {
    std::uint64_t s = state ^ 0x6a09e667f3bcc909ULL;
    s = fmix64(s + 0x9e3779b97f4a7c15ULL * (a + 1));
    s = fmix64(s ^ (0xc2b2ae3d27d4eb4fULL * (b + 1)));
    s = fmix64(s ^ (0x165667b19e3779f9ULL * (c + 1)));
    return Stream{s};
  }

  // Uniform draw strictly inside (0,1): safe to feed into normal_quantile.
  double u01() {
    return (static_cast<double>(next() >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * u01(); }

  // Inverse-CDF sampling keeps the draw sequence portable across platforms.
  double normal(double mean = 0.0, double sd = 1.0) {
    return mean + sd * normal_quantile(u01());
  }

  bool bernoulli(double p) { return u01() < p; }

  // Unbiased uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = next();
    } while (x >= limit);
    return x % n;
  }
};

inline Stream root(std::uint64_t seed) {
  return Stream{fmix64(seed ^ 0x51afd7ed558ccd00ULL)};
}

// Purpose tags for per-trial substreams.
enum purpose : std::uint64_t {
  p_covariates = 1,
  p_selection = 2,
  p_softmax_coef = 3,
  p_compliance = 4,
  p_assignment = 5,
  p_noise = 6,
  p_latent = 7,
  p_bootstrap = 8,
};

}  // namespace rng
}  // namespace tcace
