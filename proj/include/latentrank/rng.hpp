// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace latentrank {

// Every random draw in the library comes from a stream derived from
// (seed, purpose, counter). Streams never share state, so the draw order of
// one purpose cannot perturb another (oracle noise vs. candidate sampling).
enum class StreamTag : std::uint64_t {
  Init = 1,        // round-0 candidates
  Perturbation = 2,  // psi draws for the candidate set of a given round
  OracleNoise = 3,   // score noise, counter = oracle query index
  Sampling = 4,      // prior sampling
  Projection = 5,    // fixed seeded matrices (objectives, decoder)
  KMeans = 6,
};

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, StreamTag tag,
                                    std::uint64_t counter) noexcept {
  return splitmix64(splitmix64(splitmix64(seed) ^ static_cast<std::uint64_t>(tag)) ^
                    counter);
}

inline std::mt19937_64 make_stream(std::uint64_t seed, StreamTag tag,
                                   std::uint64_t counter = 0) {
  return std::mt19937_64(derive_seed(seed, tag, counter));
}

// Fills `out` with independent N(0, stddev^2) draws.
inline void fill_normal(std::mt19937_64& rng, double stddev, std::span<double> out) {
  std::normal_distribution<double> dist(0.0, 1.0);
  for (double& v : out) v = stddev * dist(rng);
}

inline std::vector<double> normal_vector(std::mt19937_64& rng, std::size_t n,
                                         double stddev) {
  std::vector<double> v(n);
  fill_normal(rng, stddev, v);
  return v;
}

}  // namespace latentrank
