// SPDX-License-Identifier: Apache-2.0
//
// Deterministic stand-in for a motion decoder. [z; c] is projected by a fixed
// seeded Gaussian matrix onto quadrature Fourier coefficients
// (alpha_h, beta_h) for each axis and harmonic h = 1..H, i.e. amplitude
// a_h = |(alpha_h, beta_h)| and phase phi_h = atan2(beta_h, alpha_h):
//
//   raw(t) = sum_h w_h * (alpha_h sin(2 pi h t / T) + beta_h cos(2 pi h t / T))
//          = sum_h w_h * a_h * sin(2 pi h t / T + phi_h)
//
// with w_h = 1 / (2h). The raw path is linear in [z; c]; the visible path is
// tanh(raw), which maps into the unit box and is 1-Lipschitz per coordinate.
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

namespace latentrank {

inline constexpr std::size_t kTrajectorySamples = 120;
inline constexpr std::size_t kHarmonics = 6;

struct Trajectory {
  std::vector<double> x;
  std::vector<double> y;

  std::size_t size() const noexcept { return x.size(); }
  bool operator==(const Trajectory&) const = default;
};

nlohmann::json to_json(const Trajectory& t);  // {"points": [[x, y], ...]}
Trajectory trajectory_from_json(const nlohmann::json& j);

class ToyDecoder {
 public:
  ToyDecoder(std::size_t latent_dim, std::size_t embedding_dim, std::uint64_t seed,
             std::size_t samples = kTrajectorySamples, std::size_t harmonics = kHarmonics);

  std::size_t latent_dim() const noexcept { return latent_dim_; }
  std::size_t embedding_dim() const noexcept { return embedding_dim_; }
  std::size_t samples() const noexcept { return samples_; }
  std::size_t harmonics() const noexcept { return harmonics_; }
  std::size_t coefficient_count() const noexcept { return 4 * harmonics_; }

  // Coefficient layout: axis-major, then harmonic, then (alpha, beta).
  std::vector<double> coefficients(std::span<const double> z, std::span<const double> c) const;
  Trajectory raw(std::span<const double> z, std::span<const double> c) const;
  Trajectory decode(std::span<const double> z, std::span<const double> c) const;

  // Row-major coefficient_count() x (latent_dim + embedding_dim).
  const std::vector<double>& projection() const noexcept { return projection_; }
  // Row-major (2 * samples) x coefficient_count(); rows are x(0..T-1), y(0..T-1).
  std::vector<double> basis() const;

 private:
  std::size_t latent_dim_;
  std::size_t embedding_dim_;
  std::size_t samples_;
  std::size_t harmonics_;
  std::vector<double> projection_;
  std::vector<double> sin_table_;  // [h][t]
  std::vector<double> cos_table_;
};

// decode(z, c, seed) with the default T and H; decoders are cached per
// (dims, seed).
Trajectory decode(std::span<const double> z, std::span<const double> c, std::uint64_t seed);

}  // namespace latentrank
