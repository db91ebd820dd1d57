#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace pstrat {

using Rng = std::mt19937_64;

// SplitMix64 finalizer.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Seed of the stream at `path` below `master`, e.g. (seed, cell, replicate).
// Streams depend only on the path, never on execution order.
inline std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> path) {
  std::uint64_t s = mix64(master);
  for (const auto step : path) s = mix64(s ^ mix64(step + 0x632BE59BD9B4E019ULL));
  return s;
}

inline Rng make_stream(std::uint64_t master, std::initializer_list<std::uint64_t> path) {
  const auto s = derive_seed(master, path);
  std::seed_seq seq{static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(s >> 32)};
  return Rng(seq);
}

}  // namespace pstrat
