// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "latentrank/prior_store.hpp"
#include "latentrank/ranking_core.hpp"

namespace latentrank {

struct BenchmarkGrid {
  std::vector<nlohmann::json> objectives;  // {kind, params, noise_std, seed}
  std::vector<OptimizerConfig> configs;
  std::vector<std::uint64_t> seeds;
  StopRule stop;
};

struct BenchmarkRow {
  std::string objective;
  OptimizerConfig config;
  std::uint64_t seed = 0;
  std::vector<double> best_f_per_round;  // min objective over each round's candidates
  double final_f = 0.0;                  // objective at the returned z**
};

// {objectives: [...], configs: [...], seeds: [..] | N, rounds: [s1, s2]}
BenchmarkGrid grid_from_json(const nlohmann::json& j);

// Rows come back in grid order (objective, config, seed) regardless of the
// number of worker threads.
std::vector<BenchmarkRow> run_benchmark(const BenchmarkGrid& grid, std::size_t threads);

// Columns: objective,d,m,k,eta,gamma,mu1,mu2,mu3,elitism,seed,rounds,
// best_f_per_round,final_f. best_f_per_round is ';'-separated.
std::string benchmark_csv(const std::vector<BenchmarkRow>& rows);

struct SigmaSweepRow {
  double sigma = 0.0;
  std::size_t draws = 0;
  double coordinate_std = 0.0;  // mean over coordinates of the sample std
  double mean_distance = 0.0;   // mean ||z - z**||
};

std::vector<SigmaSweepRow> sigma_sweep(const RepresentativeEntry& entry,
                                       std::span<const double> sigmas, std::size_t draws,
                                       std::uint64_t seed);
std::string sigma_sweep_csv(const std::vector<SigmaSweepRow>& rows);

}  // namespace latentrank
