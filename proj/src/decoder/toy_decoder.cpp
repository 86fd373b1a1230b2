// SPDX-License-Identifier: Apache-2.0
#include "latentrank/decoder.hpp"

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <tuple>

#include "latentrank/error.hpp"
#include "latentrank/rng.hpp"

namespace latentrank {

nlohmann::json to_json(const Trajectory& t) {
  nlohmann::json points = nlohmann::json::array();
  for (std::size_t i = 0; i < t.size(); ++i) points.push_back({t.x[i], t.y[i]});
  return {{"points", std::move(points)}};
}

Trajectory trajectory_from_json(const nlohmann::json& j) {
  Trajectory t;
  try {
    for (const auto& p : j.at("points")) {
      if (p.size() != 2) fail(ErrorCode::Parse, "trajectory points must be [x, y] pairs");
      t.x.push_back(p[0].get<double>());
      t.y.push_back(p[1].get<double>());
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Parse, std::string("bad trajectory: ") + e.what());
  }
  return t;
}

ToyDecoder::ToyDecoder(std::size_t latent_dim, std::size_t embedding_dim, std::uint64_t seed,
                       std::size_t samples, std::size_t harmonics)
    : latent_dim_(latent_dim),
      embedding_dim_(embedding_dim),
      samples_(samples),
      harmonics_(harmonics) {
  if (latent_dim == 0 || samples == 0 || harmonics == 0)
    fail(ErrorCode::Config, "decoder dimensions must be positive");
  const std::size_t in = latent_dim + embedding_dim;
  auto rng = make_stream(seed, StreamTag::Projection, 0x6465636f646572ULL);
  projection_ = normal_vector(rng, coefficient_count() * in, 1.0 / std::sqrt(double(in)));

  sin_table_.resize(harmonics * samples);
  cos_table_.resize(harmonics * samples);
  for (std::size_t h = 0; h < harmonics; ++h) {
    const double weight = 1.0 / (2.0 * double(h + 1));
    for (std::size_t t = 0; t < samples; ++t) {
      const double angle = 2.0 * std::numbers::pi * double(h + 1) * double(t) / double(samples);
      sin_table_[h * samples + t] = weight * std::sin(angle);
      cos_table_[h * samples + t] = weight * std::cos(angle);
    }
  }
}

std::vector<double> ToyDecoder::coefficients(std::span<const double> z,
                                             std::span<const double> c) const {
  if (z.size() != latent_dim_)
    fail(ErrorCode::Domain, "decoder expects a latent of dimension " + std::to_string(latent_dim_));
  if (c.size() != embedding_dim_)
    fail(ErrorCode::Domain,
         "decoder expects an embedding of dimension " + std::to_string(embedding_dim_));
  const std::size_t in = latent_dim_ + embedding_dim_;
  std::vector<double> coef(coefficient_count(), 0.0);
  for (std::size_t r = 0; r < coef.size(); ++r) {
    const double* row = projection_.data() + r * in;
    double acc = 0.0;
    for (std::size_t i = 0; i < latent_dim_; ++i) acc += row[i] * z[i];
    for (std::size_t i = 0; i < embedding_dim_; ++i) acc += row[latent_dim_ + i] * c[i];
    coef[r] = acc;
  }
  return coef;
}

Trajectory ToyDecoder::raw(std::span<const double> z, std::span<const double> c) const {
  const auto coef = coefficients(z, c);
  Trajectory out{std::vector<double>(samples_, 0.0), std::vector<double>(samples_, 0.0)};
  for (std::size_t axis = 0; axis < 2; ++axis) {
    auto& dst = axis == 0 ? out.x : out.y;
    for (std::size_t h = 0; h < harmonics_; ++h) {
      const double alpha = coef[(axis * harmonics_ + h) * 2];
      const double beta = coef[(axis * harmonics_ + h) * 2 + 1];
      const double* s = sin_table_.data() + h * samples_;
      const double* co = cos_table_.data() + h * samples_;
      for (std::size_t t = 0; t < samples_; ++t) dst[t] += alpha * s[t] + beta * co[t];
    }
  }
  return out;
}

Trajectory ToyDecoder::decode(std::span<const double> z, std::span<const double> c) const {
  Trajectory t = raw(z, c);
  for (double& v : t.x) v = std::tanh(v);
  for (double& v : t.y) v = std::tanh(v);
  return t;
}

std::vector<double> ToyDecoder::basis() const {
  const std::size_t cols = coefficient_count();
  std::vector<double> b(2 * samples_ * cols, 0.0);
  for (std::size_t axis = 0; axis < 2; ++axis)
    for (std::size_t t = 0; t < samples_; ++t) {
      double* row = b.data() + (axis * samples_ + t) * cols;
      for (std::size_t h = 0; h < harmonics_; ++h) {
        row[(axis * harmonics_ + h) * 2] = sin_table_[h * samples_ + t];
        row[(axis * harmonics_ + h) * 2 + 1] = cos_table_[h * samples_ + t];
      }
    }
  return b;
}

Trajectory decode(std::span<const double> z, std::span<const double> c, std::uint64_t seed) {
  static std::mutex mu;
  static std::map<std::tuple<std::size_t, std::size_t, std::uint64_t>,
                  std::shared_ptr<const ToyDecoder>>
      cache;
  std::shared_ptr<const ToyDecoder> dec;
  {
    std::lock_guard lock(mu);
    auto& slot = cache[{z.size(), c.size(), seed}];
    if (!slot) slot = std::make_shared<const ToyDecoder>(z.size(), c.size(), seed);
    dec = slot;
  }
  return dec->decode(z, c);
}

}  // namespace latentrank
