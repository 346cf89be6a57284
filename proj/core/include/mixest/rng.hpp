#pragma once

#include <cstdint>
#include <random>

namespace mixest {

inline constexpr const char* kVersion = "0.1.0";

// SplitMix64 finalizer; used to derive independent per-replicate streams so
// growing the replicate count never reshuffles earlier replicates.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::mt19937_64 derive_stream(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t s = splitmix64(seed ^ splitmix64(index + 1));
  return std::mt19937_64(s);
}

}  // namespace mixest
