#pragma once

#include <cstdint>
#include <random>

namespace sanar {

/// splitmix64 finalizer, used to mix seeds for derived generators.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

using Rng = std::mt19937_64;

/// Derives an independent generator for a (run seed, stream, index) triple.
/// Streams keep per-batch / per-example randomness reproducible regardless
/// of evaluation order: stream 0 = data shuffling, 1 = per-example training
/// randomness (glance sampling + dropout), 2 = parameter init, 3 = masking.
inline Rng split_rng(std::uint64_t seed, std::uint64_t stream,
                     std::uint64_t index = 0) {
  return Rng(mix64(mix64(seed ^ (stream << 48)) + index));
}

/// Uniform integer in [0, n).  n must be > 0.  A degenerate draw (n == 1)
/// returns 0 without consuming the generator, so reproducible consumption
/// counts do not depend on how the standard library handles single-outcome
/// distributions.
inline std::size_t rand_index(Rng& rng, std::size_t n) {
  if (n == 1) return 0;
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

inline double rand_unit(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

}  // namespace sanar
