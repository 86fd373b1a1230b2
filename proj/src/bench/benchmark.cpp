// SPDX-License-Identifier: Apache-2.0
#include "latentrank/benchmark.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <sstream>
#include <thread>

#include "latentrank/error.hpp"
#include "latentrank/oracle.hpp"
#include "latentrank/rng.hpp"
#include "latentrank/transcript.hpp"

namespace latentrank {

BenchmarkGrid grid_from_json(const nlohmann::json& j) {
  BenchmarkGrid g;
  try {
    for (const auto& o : j.at("objectives")) {
      if (o.is_string())
        g.objectives.push_back({{"kind", o.get<std::string>()}});
      else
        g.objectives.push_back(o);
    }
    if (j.contains("configs")) {
      for (const auto& c : j.at("configs")) g.configs.push_back(config_from_json(c));
    } else {
      g.configs.push_back(OptimizerConfig{});
    }
    const auto& seeds = j.at("seeds");
    if (seeds.is_number_integer()) {
      for (std::uint64_t s = 0; s < seeds.get<std::uint64_t>(); ++s) g.seeds.push_back(s);
    } else {
      g.seeds = seeds.get<std::vector<std::uint64_t>>();
    }
    if (j.contains("rounds")) {
      const auto r = j.at("rounds").get<std::vector<std::size_t>>();
      if (r.size() != 2) fail(ErrorCode::Parse, "rounds must be [stage1, stage2]");
      g.stop = {r[0], r[1]};
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Parse, std::string("malformed benchmark grid: ") + e.what());
  }
  if (g.objectives.empty() || g.configs.empty() || g.seeds.empty())
    fail(ErrorCode::Parse, "benchmark grid has an empty axis");
  for (const auto& c : g.configs) {
    c.validate();
    for (const auto& o : g.objectives) ScalarObjective::from_json(o, c.d);
  }
  return g;
}

namespace {

BenchmarkRow run_one(const nlohmann::json& spec, const OptimizerConfig& base, std::uint64_t seed,
                     const StopRule& stop) {
  OptimizerConfig cfg = base;
  cfg.seed = seed;
  const auto objective = ScalarObjective::from_json(spec, cfg.d);
  const std::uint64_t oracle_seed = spec.value("seed", std::uint64_t{0}) ^ splitmix64(seed);
  ScriptedOracle oracle(objective, cfg.k, spec.value("noise_std", 0.0), oracle_seed);
  const auto run = run_scripted(cfg, oracle, stop);

  BenchmarkRow row;
  row.objective = objective.name();
  row.config = run.final_state.config;
  row.seed = seed;
  for (const auto& rec : run.log) row.best_f_per_round.push_back(rec.best_f.value_or(NAN));
  row.final_f = objective.evaluate(run.result);
  return row;
}

}  // namespace

std::vector<BenchmarkRow> run_benchmark(const BenchmarkGrid& grid, std::size_t threads) {
  struct Job {
    const nlohmann::json* spec;
    const OptimizerConfig* config;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (const auto& o : grid.objectives)
    for (const auto& c : grid.configs)
      for (auto s : grid.seeds) jobs.push_back({&o, &c, s});

  std::vector<BenchmarkRow> rows(jobs.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < jobs.size();) {
      try {
        rows[i] = run_one(*jobs[i].spec, *jobs[i].config, jobs[i].seed, grid.stop);
      } catch (...) {
        std::lock_guard lock(error_mu);
        if (!error) error = std::current_exception();
      }
    }
  };
  threads = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(1, jobs.size()));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
  return rows;
}

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

std::string benchmark_csv(const std::vector<BenchmarkRow>& rows) {
  std::string out =
      "objective,d,m,k,eta,gamma,mu1,mu2,mu3,elitism,seed,rounds,best_f_per_round,final_f\n";
  for (const auto& r : rows) {
    const auto& c = r.config;
    std::string per_round;
    for (std::size_t i = 0; i < r.best_f_per_round.size(); ++i) {
      if (i) per_round += ';';
      per_round += fmt(r.best_f_per_round[i]);
    }
    out += r.objective + ',' + std::to_string(c.d) + ',' + std::to_string(c.m) + ',' +
           std::to_string(c.k) + ',' + fmt(c.eta) + ',' + fmt(c.gamma) + ',' + fmt(c.mu1) + ',' +
           fmt(c.mu2) + ',' + fmt(c.mu3) + ',' + (c.elitism ? "true" : "false") + ',' +
           std::to_string(r.seed) + ',' + std::to_string(r.best_f_per_round.size()) + ',' +
           per_round + ',' + fmt(r.final_f) + '\n';
  }
  return out;
}

std::vector<SigmaSweepRow> sigma_sweep(const RepresentativeEntry& entry,
                                       std::span<const double> sigmas, std::size_t draws,
                                       std::uint64_t seed) {
  if (draws < 2) fail(ErrorCode::Config, "sigma sweep needs at least two draws");
  std::vector<SigmaSweepRow> rows;
  const std::size_t d = entry.z_star_star.size();
  for (double sigma : sigmas) {
    if (!(sigma > 0.0)) fail(ErrorCode::Config, "sigma values must be positive");
    RepresentativeEntry e = entry;
    e.sigma = sigma;
    // Same stream for every sigma: dispersion differs only through sigma.
    auto rng = make_stream(seed, StreamTag::Sampling, 0);
    std::vector<double> sum(d, 0.0), sumsq(d, 0.0);
    double dist = 0.0;
    for (std::size_t n = 0; n < draws; ++n) {
      const auto z = sample_latent(e, rng);
      double r2 = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        const double dev = z[i] - e.z_star_star[i];
        sum[i] += dev;
        sumsq[i] += dev * dev;
        r2 += dev * dev;
      }
      dist += std::sqrt(r2);
    }
    double stdsum = 0.0;
    const double nd = static_cast<double>(draws);
    for (std::size_t i = 0; i < d; ++i) {
      const double mean = sum[i] / nd;
      stdsum += std::sqrt(std::max(0.0, (sumsq[i] - nd * mean * mean) / (nd - 1.0)));
    }
    rows.push_back({sigma, draws, stdsum / double(d), dist / nd});
  }
  return rows;
}

std::string sigma_sweep_csv(const std::vector<SigmaSweepRow>& rows) {
  std::string out = "sigma,draws,coordinate_std,mean_distance\n";
  for (const auto& r : rows)
    out += fmt(r.sigma) + ',' + std::to_string(r.draws) + ',' + fmt(r.coordinate_std) + ',' +
           fmt(r.mean_distance) + '\n';
  return out;
}

}  // namespace latentrank
