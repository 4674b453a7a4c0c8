#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace batchstep {

// std::mt19937_64 output is fully specified by the standard, but the std
// distributions are not. Everything seeded goes through these helpers so that
// streams are identical across standard libraries.
using Rng = std::mt19937_64;

// Uniform in [0, 1) with 53 random bits.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

// Uniform integer in [0, bound) by rejection (no modulo bias).
inline std::uint64_t uniform_below(Rng& rng, std::uint64_t bound) {
  const std::uint64_t limit = bound * (UINT64_MAX / bound);
  std::uint64_t r = rng();
  while (r >= limit) r = rng();
  return r % bound;
}

// Box-Muller; discards the second variate to keep the helper stateless.
inline double standard_normal(Rng& rng) {
  double u1 = uniform01(rng);
  while (u1 <= 0.0) u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace batchstep
