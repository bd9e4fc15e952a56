#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace spantagger {

// Exact-uniform draw from [0, k) by rejection. Avoids the distribution
// classes so streams are reproducible across standard libraries.
inline std::uint64_t bounded_rand(std::mt19937_64& rng, std::uint64_t k) {
  if (k == 0) throw std::invalid_argument("bounded_rand: k must be positive");
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % k;
  std::uint64_t r = rng();
  while (r >= limit) r = rng();
  return r % k;
}

// Uniform double in [0, 1) with 53 random bits.
inline double unit_rand(std::mt19937_64& rng) {
  return (rng() >> 11) * 0x1.0p-53;
}

inline double uniform_rand(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * unit_rand(rng);
}

inline void shuffle_indices(std::vector<int>& idx, std::mt19937_64& rng) {
  for (std::size_t i = idx.size(); i > 1; --i)
    std::swap(idx[i - 1], idx[bounded_rand(rng, i)]);
}

// FNV-1a over "<seed>:<key>"; gives each sentence its own evaluation-time
// stream so results do not depend on corpus order.
inline std::uint64_t derive_seed(std::uint64_t seed, const std::string& key) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&](unsigned char c) {
    h ^= c;
    h *= 1099511628211ull;
  };
  for (char c : std::to_string(seed)) mix(static_cast<unsigned char>(c));
  mix(':');
  for (char c : key) mix(static_cast<unsigned char>(c));
  return h;
}

}  // namespace spantagger
