#pragma once

#include <cstdint>
#include <random>

namespace qubolab {

/// SplitMix64 finalizer. Used to derive well-mixed seeds and per-element hashes.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) noexcept {
  return splitmix64(a ^ splitmix64(b + 0x632be59bd9b4e019ULL));
}

/// Uniform double in [0, 1) from a counter-based hash.
constexpr double hash_uniform(std::uint64_t seed, std::uint64_t index) noexcept {
  return static_cast<double>(mix_seed(seed, index) >> 11) * 0x1.0p-53;
}

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed) { return Rng(splitmix64(seed)); }

}  // namespace qubolab
