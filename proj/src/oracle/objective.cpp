// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include "latentrank/error.hpp"
#include "latentrank/oracle.hpp"
#include "latentrank/prior_store.hpp"
#include "latentrank/rng.hpp"

namespace latentrank {

const char* to_string(ObjectiveKind kind) noexcept {
  switch (kind) {
    case ObjectiveKind::Sphere: return "sphere";
    case ObjectiveKind::Rosenbrock: return "rosenbrock";
    case ObjectiveKind::EmbeddingQuadratic: return "embedding_quadratic";
    case ObjectiveKind::TrajectoryDistance: return "trajectory_distance";
  }
  return "?";
}

ObjectiveKind objective_kind_from_string(const std::string& name) {
  if (name == "sphere") return ObjectiveKind::Sphere;
  if (name == "rosenbrock") return ObjectiveKind::Rosenbrock;
  if (name == "embedding_quadratic") return ObjectiveKind::EmbeddingQuadratic;
  if (name == "trajectory_distance") return ObjectiveKind::TrajectoryDistance;
  fail(ErrorCode::Parse, "unknown objective kind '" + name + "'");
}

std::vector<double> embedding_projection(std::size_t d, std::span<const double> embedding,
                                         std::uint64_t projection_seed, double scale) {
  if (embedding.empty()) fail(ErrorCode::Domain, "embedding must not be empty");
  auto rng = make_stream(projection_seed, StreamTag::Projection, embedding.size());
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<double> target(d, 0.0);
  for (std::size_t i = 0; i < d; ++i) {
    double acc = 0.0;
    for (double c : embedding) acc += scale * dist(rng) * c;
    target[i] = acc;
  }
  return target;
}

ScalarObjective ScalarObjective::sphere(std::vector<double> center) {
  if (center.empty()) fail(ErrorCode::Domain, "sphere center must not be empty");
  ScalarObjective o;
  o.kind_ = ObjectiveKind::Sphere;
  o.d_ = center.size();
  o.center_ = std::move(center);
  o.name_ = "sphere";
  return o;
}

ScalarObjective ScalarObjective::rosenbrock(std::size_t d) {
  if (d < 2) fail(ErrorCode::Domain, "rosenbrock needs d >= 2");
  ScalarObjective o;
  o.kind_ = ObjectiveKind::Rosenbrock;
  o.d_ = d;
  o.name_ = "rosenbrock";
  return o;
}

ScalarObjective ScalarObjective::embedding_quadratic(std::size_t d, EmbeddingQuadraticParams p) {
  if (d == 0) fail(ErrorCode::Domain, "dimension must be positive");
  ScalarObjective o;
  o.kind_ = ObjectiveKind::EmbeddingQuadratic;
  o.d_ = d;
  o.center_ = embedding_projection(d, p.embedding, p.projection_seed, p.scale);
  o.embedding_ = std::move(p.embedding);
  o.name_ = "embedding_quadratic";
  return o;
}

ScalarObjective ScalarObjective::trajectory_distance(std::size_t d, TrajectoryDistanceParams p) {
  if (d == 0) fail(ErrorCode::Domain, "dimension must be positive");
  ScalarObjective o;
  o.kind_ = ObjectiveKind::TrajectoryDistance;
  o.d_ = d;
  o.decoder_ = std::make_shared<const ToyDecoder>(d, p.embedding.size(), p.decoder_seed);
  if (p.target.size() != o.decoder_->samples() || p.target.y.size() != p.target.x.size())
    fail(ErrorCode::Domain, "target trajectory must have " +
                                std::to_string(o.decoder_->samples()) + " points");
  o.embedding_ = std::move(p.embedding);
  o.target_ = std::move(p.target);
  o.name_ = "trajectory_distance";
  return o;
}

namespace {

std::vector<double> vector_param(const nlohmann::json& params, const char* key) {
  return params.at(key).get<std::vector<double>>();
}

// Condition embedding: explicit vector, or the toy embedding of `text`.
std::vector<double> condition_param(const nlohmann::json& params) {
  if (params.contains("embedding")) return vector_param(params, "embedding");
  return toy_embed(params.value("text", std::string(kDefaultConditionText)),
                   params.value("embedding_dim", kDefaultConditionDim));
}

}  // namespace

ScalarObjective ScalarObjective::from_json(const nlohmann::json& spec, std::size_t d) {
  try {
    const auto kind = objective_kind_from_string(spec.at("kind").get<std::string>());
    const nlohmann::json params = spec.value("params", nlohmann::json::object());
    switch (kind) {
      case ObjectiveKind::Sphere: {
        std::vector<double> center(d, params.value("center_value", 0.0));
        if (params.contains("center")) center = vector_param(params, "center");
        if (center.size() != d) fail(ErrorCode::Domain, "sphere center dimension mismatch");
        return sphere(std::move(center));
      }
      case ObjectiveKind::Rosenbrock:
        return rosenbrock(d);
      case ObjectiveKind::EmbeddingQuadratic:
        return embedding_quadratic(d, {condition_param(params),
                                       params.value("projection_seed", std::uint64_t{0}),
                                       params.value("scale", 1.0)});
      case ObjectiveKind::TrajectoryDistance: {
        TrajectoryDistanceParams p;
        p.embedding = condition_param(params);
        p.decoder_seed = params.value("decoder_seed", std::uint64_t{0});
        if (params.contains("target")) {
          p.target = trajectory_from_json(params.at("target"));
        } else {
          const auto latent = vector_param(params, "target_latent");
          if (latent.size() != d) fail(ErrorCode::Domain, "target_latent dimension mismatch");
          p.target = ToyDecoder(d, p.embedding.size(), p.decoder_seed).decode(latent, p.embedding);
        }
        return trajectory_distance(d, std::move(p));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Parse, std::string("bad objective spec: ") + e.what());
  }
  fail(ErrorCode::Parse, "bad objective spec");
}

double ScalarObjective::evaluate(std::span<const double> z) const {
  if (z.size() != d_)
    fail(ErrorCode::Domain, name_ + " expects dimension " + std::to_string(d_) + ", got " +
                                std::to_string(z.size()));
  switch (kind_) {
    case ObjectiveKind::Sphere:
    case ObjectiveKind::EmbeddingQuadratic: {
      double s = 0.0;
      for (std::size_t i = 0; i < d_; ++i) {
        const double diff = z[i] - center_[i];
        s += diff * diff;
      }
      return s;
    }
    case ObjectiveKind::Rosenbrock: {
      double s = 0.0;
      for (std::size_t i = 0; i + 1 < d_; ++i) {
        const double a = z[i + 1] - z[i] * z[i];
        const double b = 1.0 - z[i];
        s += 100.0 * a * a + b * b;
      }
      return s;
    }
    case ObjectiveKind::TrajectoryDistance: {
      const Trajectory t = decoder_->decode(z, embedding_);
      double s = 0.0;
      for (std::size_t i = 0; i < t.size(); ++i) {
        const double dx = t.x[i] - target_.x[i];
        const double dy = t.y[i] - target_.y[i];
        s += dx * dx + dy * dy;
      }
      return s / static_cast<double>(t.size());
    }
  }
  return 0.0;
}

std::optional<std::vector<double>> ScalarObjective::minimizer() const {
  switch (kind_) {
    case ObjectiveKind::Sphere:
    case ObjectiveKind::EmbeddingQuadratic: return center_;
    case ObjectiveKind::Rosenbrock: return std::vector<double>(d_, 1.0);
    case ObjectiveKind::TrajectoryDistance: return std::nullopt;
  }
  return std::nullopt;
}

}  // namespace latentrank
