#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace asymseg {

// splitmix64 finalizer. Used to turn (seed, salt) pairs into independent
// sub-seeds so that parallel units of work never share generator state.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt) {
  return mix64(seed ^ mix64(salt));
}

// FNV-1a 64-bit; also used for config hashes and fingerprints.
inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag) {
  return derive_seed(seed, fnv1a64(tag));
}

// Beta(alpha, alpha) via two gamma draws.
inline double draw_beta(std::mt19937_64& rng, double alpha) {
  std::gamma_distribution<double> gamma(alpha, 1.0);
  double a = gamma(rng);
  double b = gamma(rng);
  if (a + b <= 0.0) return 0.5;  // both draws underflowed
  return a / (a + b);
}

}  // namespace asymseg
