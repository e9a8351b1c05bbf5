#pragma once
// Deterministic seed derivation. Every stochastic component seeds its engine
// from (root seed, stream name, index...), so draws are reproducible and
// independent of execution order and thread count. Overlapping views that use
// the same (stream, global point index) pair see identical draws.

#include <cstdint>
#include <random>
#include <string_view>

namespace rpb {

// splitmix64 finalizer; decorrelates structurally related inputs.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t derive_seed(std::uint64_t root, std::string_view stream,
                                 std::uint64_t a = 0, std::uint64_t b = 0) {
  std::uint64_t h = splitmix64(root ^ fnv1a64(stream));
  h = splitmix64(h ^ a);
  h = splitmix64(h ^ b);
  return h;
}

inline std::mt19937_64 make_engine(std::uint64_t root, std::string_view stream,
                                   std::uint64_t a = 0, std::uint64_t b = 0) {
  return std::mt19937_64(derive_seed(root, stream, a, b));
}

}  // namespace rpb
