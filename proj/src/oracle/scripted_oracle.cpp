// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <numeric>

#include "latentrank/error.hpp"
#include "latentrank/oracle.hpp"
#include "latentrank/rng.hpp"

namespace latentrank {

ScriptedOracle::ScriptedOracle(ScoreFn score, std::size_t k, double noise_std, std::uint64_t seed,
                               bool expose_objective)
    : score_(std::move(score)), k_(k), noise_std_(noise_std), seed_(seed), expose_(expose_objective) {
  if (k_ == 0) fail(ErrorCode::Config, "oracle ranking depth must be positive");
  if (!(noise_std_ >= 0.0)) fail(ErrorCode::Config, "noise_std must be non-negative");
}

ScriptedOracle::ScriptedOracle(const ScalarObjective& objective, std::size_t k, double noise_std,
                               std::uint64_t seed)
    : ScriptedOracle([objective](std::span<const double> z) { return objective.evaluate(z); }, k,
                     noise_std, seed) {}

ScriptedOracle ScriptedOracle::from_json(const nlohmann::json& spec, std::size_t d,
                                         std::size_t k) {
  auto objective = ScalarObjective::from_json(spec, d);
  try {
    return ScriptedOracle(objective, spec.value("k", k), spec.value("noise_std", 0.0),
                          spec.value("seed", std::uint64_t{0}));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Parse, std::string("bad oracle spec: ") + e.what());
  }
}

RankFeedback ScriptedOracle::rank(const CandidateSet& candidates, std::size_t depth) {
  const std::size_t m = candidates.points.size();
  if (m == 0) fail(ErrorCode::Domain, "cannot rank an empty candidate set");
  depth = std::clamp<std::size_t>(depth, 1, m);

  std::vector<double> scores(m);
  for (std::size_t i = 0; i < m; ++i) scores[i] = score_(candidates.points[i]);
  if (noise_std_ > 0.0) {
    auto rng = make_stream(seed_, StreamTag::OracleNoise, queries_);
    std::vector<double> noise(m);
    fill_normal(rng, noise_std_, noise);
    for (std::size_t i = 0; i < m; ++i) scores[i] += noise[i];
  }
  ++queries_;

  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  order.resize(depth);
  if (depth == 1) return RankFeedback::best(order.front());
  return RankFeedback::full(std::move(order));
}

std::optional<double> ScriptedOracle::objective(std::span<const double> z) const {
  if (!expose_) return std::nullopt;
  return score_(z);
}

}  // namespace latentrank
