#pragma once

#include <cstdint>
#include <random>

namespace repdensity {

/// The single random stream type used throughout. All sampling is driven
/// by explicitly passed engines; nothing reads global state.
using Rng = std::mt19937_64;

/// Independent stream `stream` derived from a base seed. Used wherever work
/// is split across classes, pairs or points so results do not depend on
/// scheduling.
inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                    0x9e3779b9u};
  return Rng(seq);
}

/// splitmix64 mix of (seed, stream); gives each unit of parallel work its
/// own 64-bit seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace repdensity
