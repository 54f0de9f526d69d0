#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace rowgossip {

// All randomness goes through std::mt19937_64. Independent streams are
// derived from a base seed and a tuple of stream labels by splitmix64 mixing.
using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> labels) {
  std::uint64_t s = splitmix64(base);
  for (auto label : labels) s = splitmix64(s ^ splitmix64(label + 0x632BE59BD9B4E019ULL));
  return s;
}

inline Rng make_rng(std::uint64_t base, std::initializer_list<std::uint64_t> labels = {}) {
  return Rng(derive_seed(base, labels));
}

}  // namespace rowgossip
