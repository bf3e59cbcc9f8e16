#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace mfpf {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline constexpr std::uint64_t hash_label(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  return h;
}

/// Seed of an independent stream, a pure function of (seed, index, label).
inline constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index, std::string_view label = {}) {
  return splitmix64(splitmix64(seed ^ hash_label(label)) + splitmix64(index + 0x632be59bd9b4e019ULL));
}

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed, std::uint64_t index, std::string_view label = {}) {
  return Rng(derive_seed(seed, index, label));
}

}  // namespace mfpf
