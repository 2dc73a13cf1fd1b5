#pragma once

// Portable sampling on top of std::mt19937_64, whose output sequence is fixed
// by the standard. The std::uniform_* distributions are implementation
// defined, so golden files would not survive a toolchain change.

#include <cstdint>
#include <random>

namespace spsl {

using Rng = std::mt19937_64;

/// Uniform integer in [0, n), by rejection. n must be > 0.
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t v;
  do {
    v = rng();
  } while (v >= limit);
  return v % n;
}

/// Uniform integer in [lo, hi].
inline std::int64_t uniform_int(Rng& rng, std::int64_t lo, std::int64_t hi) {
  return lo + static_cast<std::int64_t>(uniform_index(rng, static_cast<std::uint64_t>(hi - lo) + 1));
}

/// Uniform double in [0, 1) with 53 random bits.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// splitmix64 finalizer; derives independent stream seeds from (base, stream).
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

template <class It>
void shuffle(Rng& rng, It first, It last) {
  for (auto n = last - first; n > 1; --n) {
    auto j = static_cast<decltype(n)>(uniform_index(rng, static_cast<std::uint64_t>(n)));
    std::swap(first[n - 1], first[j]);
  }
}

}  // namespace spsl
