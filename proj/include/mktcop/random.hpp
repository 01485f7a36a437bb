#pragma once

#include <cstdint>
#include <random>

namespace mktcop {

using Engine = std::mt19937_64;

/// SplitMix64 finalizer over (seed, stream). Gives independent,
/// reproducible sub-streams for parallel chunks.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Uniform on [0, 1) with 53 random bits, independent of the standard
/// library's distribution implementation.
inline double uniform01(Engine& engine) { return static_cast<double>(engine() >> 11) * 0x1.0p-53; }

}  // namespace mktcop
