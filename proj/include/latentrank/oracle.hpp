// SPDX-License-Identifier: Apache-2.0
//
// Synthetic scalar objectives and scripted (m,k)-ranking oracles built on
// them. Lower score is better everywhere.
#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "latentrank/decoder.hpp"
#include "latentrank/ranking_core.hpp"

namespace latentrank {

inline constexpr const char* kDefaultConditionText = "a person walks forward";
inline constexpr std::size_t kDefaultConditionDim = 32;

enum class ObjectiveKind { Sphere, Rosenbrock, EmbeddingQuadratic, TrajectoryDistance };

const char* to_string(ObjectiveKind kind) noexcept;
ObjectiveKind objective_kind_from_string(const std::string& name);

// f(z) = ||z - A c||^2 with A a d x e matrix of i.i.d. N(0, scale^2) entries
// drawn from `projection_seed`.
struct EmbeddingQuadraticParams {
  std::vector<double> embedding;
  std::uint64_t projection_seed = 0;
  double scale = 1.0;
};

struct TrajectoryDistanceParams {
  std::vector<double> embedding;
  Trajectory target;
  std::uint64_t decoder_seed = 0;
};

class ScalarObjective {
 public:
  static ScalarObjective sphere(std::vector<double> center);
  static ScalarObjective rosenbrock(std::size_t d);
  static ScalarObjective embedding_quadratic(std::size_t d, EmbeddingQuadraticParams params);
  static ScalarObjective trajectory_distance(std::size_t d, TrajectoryDistanceParams params);

  // {kind, params} as accepted by the CLI and service. `d` fills in
  // defaults (zero center, etc.). Conditioned kinds take params.embedding,
  // or embed params.text (default kDefaultConditionText) with toy_embed at
  // params.embedding_dim (default kDefaultConditionDim).
  static ScalarObjective from_json(const nlohmann::json& spec, std::size_t d);

  ObjectiveKind kind() const noexcept { return kind_; }
  std::size_t dimension() const noexcept { return d_; }
  const std::string& name() const noexcept { return name_; }

  // Throws Error(Domain) on dimension mismatch.
  double evaluate(std::span<const double> z) const;

  // A c for EmbeddingQuadratic (the unique minimizer), the center for Sphere.
  std::optional<std::vector<double>> minimizer() const;

 private:
  ObjectiveKind kind_ = ObjectiveKind::Sphere;
  std::size_t d_ = 0;
  std::string name_;
  std::vector<double> center_;  // sphere center or A c
  std::shared_ptr<const ToyDecoder> decoder_;
  std::vector<double> embedding_;
  Trajectory target_;
};

// Builds the EmbeddingQuadratic target A c without constructing an objective.
std::vector<double> embedding_projection(std::size_t d, std::span<const double> embedding,
                                         std::uint64_t projection_seed, double scale);

using ScoreFn = std::function<double(std::span<const double>)>;

// Ranks candidates by score + N(0, noise_std^2); ties go to the lower index.
// Query q draws its noise from stream (seed, OracleNoise, q), so the oracle's
// randomness never touches the optimizer's streams.
class ScriptedOracle final : public RankingOracle {
 public:
  ScriptedOracle(ScoreFn score, std::size_t k, double noise_std = 0.0, std::uint64_t seed = 0,
                 bool expose_objective = true);
  ScriptedOracle(const ScalarObjective& objective, std::size_t k, double noise_std = 0.0,
                 std::uint64_t seed = 0);

  // {kind, params, noise_std, seed, k?}
  static ScriptedOracle from_json(const nlohmann::json& spec, std::size_t d, std::size_t k);

  RankFeedback rank(const CandidateSet& candidates, std::size_t depth) override;
  RankFeedback rank(const CandidateSet& candidates) { return rank(candidates, k_); }
  std::optional<double> objective(std::span<const double> z) const override;

  double score(std::span<const double> z) const { return score_(z); }
  std::size_t depth() const noexcept { return k_; }
  double noise_std() const noexcept { return noise_std_; }
  std::uint64_t queries() const noexcept { return queries_; }

 private:
  ScoreFn score_;
  std::size_t k_;
  double noise_std_;
  std::uint64_t seed_;
  bool expose_;
  std::uint64_t queries_ = 0;
};

}  // namespace latentrank
