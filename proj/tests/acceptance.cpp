// SPDX-License-Identifier: Apache-2.0
//
// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero when any selected criterion fails. `--criterion N` runs only N.
#include <httplib.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <string>
#include <thread>

#include "latentrank/benchmark.hpp"
#include "latentrank/http_server.hpp"
#include "latentrank/oracle.hpp"
#include "latentrank/prior_store.hpp"
#include "latentrank/rng.hpp"
#include "latentrank/transcript.hpp"
#include "support.hpp"

using namespace latentrank;
using namespace testsupport;
using nlohmann::json;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double sphere(std::span<const double> z) {
  double s = 0.0;
  for (double v : z) s += v * v;
  return s;
}

// Min of f over every candidate shown in a round, recomputed from the log.
std::vector<double> best_per_round(const RoundLog& log, const std::function<double(std::span<const double>)>& f) {
  std::vector<double> out;
  for (const auto& r : log) {
    double best = INFINITY;
    for (const auto& z : r.candidates) best = std::min(best, f(z));
    out.push_back(best);
  }
  return out;
}

// 1. Rankings from f and exp(f) coincide, so the transcripts must too.
Outcome monotone_invariance() {
  const auto t0 = Clock::now();
  OptimizerConfig cfg;
  cfg.d = 16;
  cfg.seed = 2024;
  auto transcript_for = [&](ScoreFn score) {
    ScriptedOracle oracle(std::move(score), cfg.k, 0.0, 0, false);
    const auto run = run_scripted(cfg, oracle, {20, 5});
    Transcript t;
    t.header.config = run.final_state.config;
    t.records = run.log;
    return write_transcript(t);
  };
  const std::string a = transcript_for(sphere);
  const std::string b = transcript_for([](std::span<const double> z) { return std::exp(sphere(z)); });
  const double secs = seconds_since(t0);
  return {a == b && secs < 1.0,
          fmt("identical=%s bytes=%zu runtime=%.3fs (limit 1s)", a == b ? "yes" : "no", a.size(), secs)};
}

// 2. Mean of many rank-based estimates for f(z) = a.z points along a.
Outcome gradient_alignment() {
  const auto t0 = Clock::now();
  const std::size_t d = 16, m = 4, n = 10000;
  const double mu = 0.1;
  std::mt19937_64 rng(7);
  const auto a = gaussian(rng, d);
  std::vector<double> mean(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    CandidateSet cs;
    for (std::size_t j = 0; j < m; ++j) cs.points.push_back(gaussian(rng, d, mu));
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](auto x, auto y) { return dot(a, cs.points[x]) < dot(a, cs.points[y]); });
    const auto g = estimate_gradient(cs, build_comparison_dag(m, RankFeedback::full(order)), mu);
    for (std::size_t j = 0; j < d; ++j) mean[j] += g[j] / double(n);
  }
  const double c = cosine(mean, a);
  const double secs = seconds_since(t0);
  return {c > 0.8 && secs < 5.0, fmt("cosine=%.4f (need > 0.8) runtime=%.3fs (limit 5s)", c, secs)};
}

// 3. Sphere at d=256 with the default parameters, 50 + 10 rounds.
Outcome convergence() {
  const auto t0 = Clock::now();
  std::vector<double> ratios;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    OptimizerConfig cfg;
    cfg.d = 256;
    cfg.seed = seed;
    cfg.elitism = true;
    ScriptedOracle oracle(ScoreFn(sphere), cfg.k, 0.0, 0, false);
    const auto run = run_scripted(cfg, oracle, {50, 10});
    const double initial = best_per_round(run.log, sphere).front();
    ratios.push_back(sphere(run.result) / initial);
  }
  const double med = median(ratios);
  const double secs = seconds_since(t0);
  return {med < 0.1 && secs < 30.0,
          fmt("median final/initial=%.4f (need < 0.1) runtime=%.3fs (limit 30s)", med, secs)};
}

// Synthetic condition near `center`: unit(center + spread * n / sqrt(e)).
std::vector<double> nearby(const std::vector<double>& center, double spread, std::mt19937_64& rng) {
  const auto n = normal_vector(rng, center.size(), 1.0);
  std::vector<double> c(center.size());
  for (std::size_t j = 0; j < c.size(); ++j)
    c[j] = center[j] + spread * n[j] / std::sqrt(double(center.size()));
  return unit(c);
}

constexpr std::size_t kD = 8, kE = 16;
constexpr std::uint64_t kProjectionSeed = 7;

// 4. Starting from a nearby condition's optimum beats a cold start.
Outcome warm_start_advantage() {
  auto rng = make_stream(42, StreamTag::Init, 0);
  const auto c0 = unit(normal_vector(rng, kE, 1.0));
  const auto c1 = nearby(c0, 0.3, rng);
  const auto f0 = ScalarObjective::embedding_quadratic(kD, {c0, kProjectionSeed, 1.0});
  const auto f1 = ScalarObjective::embedding_quadratic(kD, {c1, kProjectionSeed, 1.0});
  auto f1_eval = [&](std::span<const double> z) { return f1.evaluate(z); };

  std::vector<std::vector<double>> cold(20), warm(20);
  for (std::uint64_t s = 0; s < 20; ++s) {
    OptimizerConfig cfg;
    cfg.d = kD;
    cfg.seed = 100 + s;
    ScriptedOracle o0(f0, cfg.k);
    const auto prior = run_scripted(cfg, o0, {50, 10}).result;

    cfg.seed = 200 + s;
    ScriptedOracle oc(f1, cfg.k);
    cold[s] = best_per_round(run_scripted(cfg, oc, {30, 10}).log, f1_eval);

    OptimizerConfig wcfg = cfg;
    wcfg.max_stage2_rounds = 40;
    ScriptedOracle ow(f1, cfg.k);
    warm[s] = best_per_round(run_scripted_from(init_session_from(wcfg, prior, true), ow, {0, 40}).log, f1_eval);
  }
  std::vector<double> round15;
  for (const auto& c : cold) round15.push_back(c.at(15));
  const double eps = median(round15);
  auto rounds_to_eps = [&](const std::vector<double>& v) {
    for (std::size_t i = 0; i < v.size(); ++i)
      if (v[i] <= eps) return double(i);
    return double(v.size());  // never reached: counts as the full budget
  };
  std::vector<double> rc, rw;
  for (std::size_t s = 0; s < 20; ++s) rc.push_back(rounds_to_eps(cold[s])), rw.push_back(rounds_to_eps(warm[s]));
  const double mc = median(rc), mw = median(rw);
  return {mw < mc, fmt("epsilon=%.5f median rounds cold=%.1f warm=%.1f (need warm < cold)", eps, mc, mw)};
}

// 5. Nearby conditions end up with nearby optimized latents.
Outcome embedding_proximity() {
  auto rng = make_stream(5, StreamTag::Init, 1);
  std::vector<std::vector<double>> centers;
  for (int k = 0; k < 4; ++k) centers.push_back(unit(normal_vector(rng, kE, 1.0)));
  std::vector<std::vector<double>> conds, zs;
  for (int i = 0; i < 20; ++i) conds.push_back(nearby(centers[i % 4], 0.3, rng));
  for (int i = 0; i < 20; ++i) {
    const auto f = ScalarObjective::embedding_quadratic(kD, {conds[i], kProjectionSeed, 1.0});
    OptimizerConfig cfg;
    cfg.d = kD;
    cfg.seed = 300 + i;
    ScriptedOracle oracle(f, cfg.k);
    zs.push_back(run_scripted(cfg, oracle, {50, 10}).result);
  }
  std::vector<double> de, dz;
  for (int i = 0; i < 20; ++i)
    for (int j = i + 1; j < 20; ++j) {
      de.push_back(std::sqrt(sq_dist(conds[i], conds[j])));
      dz.push_back(std::sqrt(sq_dist(zs[i], zs[j])));
    }
  const double rho = spearman(de, dz);
  return {rho > 0.5, fmt("spearman=%.4f over %zu pairs (need > 0.5)", rho, de.size())};
}

// 6. Store selection equals an exhaustive cosine scan.
Outcome selection() {
  std::mt19937_64 rng(11);
  PriorStore store(16, kDefaultEmbeddingDim);
  std::vector<std::vector<double>> embs;
  for (int i = 0; i < 5; ++i) {
    embs.push_back(gaussian(rng, kDefaultEmbeddingDim));
    store.add({"r" + std::to_string(i), "", embs.back(), {}, kDefaultSigma});
  }
  std::size_t mismatches = 0;
  for (int q = 0; q < 1000; ++q) {
    const auto query = gaussian(rng, kDefaultEmbeddingDim);
    mismatches += store.select_prior(query) != brute_force_argmax(embs, query);
  }
  return {mismatches == 0, fmt("mismatches=%zu of 1000", mismatches)};
}

// 7. Sample moments at sigma = 0.2 and the sigma sweep.
Outcome sampling() {
  std::mt19937_64 rng(13);
  const RepresentativeEntry entry{"e", "", {1.0}, gaussian(rng, 64), 0.2};
  const std::size_t n = 100000, d = entry.z_star_star.size();
  std::vector<double> sum(d, 0.0), sumsq(d, 0.0);
  auto stream = make_stream(17, StreamTag::Sampling, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto z = sample_latent(entry, stream);
    for (std::size_t j = 0; j < d; ++j) {
      const double v = z[j] - entry.z_star_star[j];
      sum[j] += v, sumsq[j] += v * v;
    }
  }
  double min_sd = INFINITY, max_sd = 0.0, max_mean_err = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    const double mean = sum[j] / double(n);
    const double sd = std::sqrt((sumsq[j] - double(n) * mean * mean) / double(n - 1));
    min_sd = std::min(min_sd, sd);
    max_sd = std::max(max_sd, sd);
    max_mean_err = std::max(max_mean_err, std::abs(mean));
  }
  const std::vector<double> sigmas{0.1, 0.2, 0.3, 0.4, 0.5};
  const auto rows = sigma_sweep(entry, sigmas, 20000, 19);
  bool increasing = true;
  for (std::size_t i = 1; i < rows.size(); ++i)
    increasing = increasing && rows[i].coordinate_std > rows[i - 1].coordinate_std;
  const bool pass = min_sd >= 0.19 && max_sd <= 0.21 && max_mean_err < 0.005 && increasing;
  return {pass, fmt("std in [%.4f, %.4f], max |mean - z**|=%.5f, sweep increasing=%s", min_sd, max_sd,
                    max_mean_err, increasing ? "yes" : "no")};
}

// 8. HTTP round trip, then offline replay of the persisted transcript.
Outcome service_round_trip() {
  TempDir dir;
  ServiceOptions opts;
  opts.data_dir = dir.path();
  HttpServer server(opts);
  const int port = server.bind("127.0.0.1", 0);
  std::thread loop([&] { server.listen(); });
  struct Join {
    HttpServer& s;
    std::thread& t;
    ~Join() {
      s.stop();
      t.join();
    }
  } join{server, loop};

  httplib::Client cli("127.0.0.1", port);
  auto post = [&](const std::string& path, const json& body) {
    auto res = cli.Post(path, body.dump(), "application/json");
    return res ? std::make_pair(res->status, json::parse(res->body)) : std::make_pair(0, json());
  };
  auto [status, created] = post("/sessions", {{"mode", "scripted"},
                                              {"condition_text", "a person walks in a circle"},
                                              {"latents", true},
                                              {"config", {{"d", 32}, {"seed", 8}, {"max_stage1_rounds", 8},
                                                          {"max_stage2_rounds", 4}}}});
  if (status != 201) return {false, fmt("create_session status %d", status)};
  const std::string id = created.at("id");
  json round = created.at("round");
  json final_body;
  for (int guard = 0; guard < 100 && final_body.is_null(); ++guard) {
    std::vector<double> f;
    for (const auto& z : round.at("latents")) f.push_back(sphere(z.get<std::vector<double>>()));
    std::vector<std::size_t> order(f.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto x, auto y) { return f[x] < f[y]; });
    const bool full = round.at("stage") == "stage1" && round.at("round").get<int>() < 7;
    json fb{{"round", round.at("round")},
            {"kind", full ? "full_ranking" : "best_only"},
            {"ranking", full ? json(order) : json({order[0]})},
            {"latents", true}};
    auto [s, body] = post("/sessions/" + id + "/feedback", fb);
    if (s != 200) return {false, fmt("feedback status %d", s)};
    if (body.at("status") == "finished")
      final_body = body;
    else
      round = body.at("round");
  }
  if (final_body.is_null()) return {false, "session did not finish"};
  const auto served = final_body.at("z_star_star").get<std::vector<double>>();
  const auto transcript = read_transcript(server.service().session_path(id));
  const auto state = replay(transcript);
  const bool same = state.z_star_star && *state.z_star_star == served;
  return {same, fmt("rounds=%zu replayed z** bitwise equal=%s, no web-ui target built", transcript.records.size(),
                    same ? "yes" : "no")};
}

struct Criterion {
  int id;
  const char* name;
  Outcome (*run)();
};

constexpr Criterion kCriteria[] = {
    {1, "monotone-transform invariance", monotone_invariance},
    {2, "gradient-estimator alignment", gradient_alignment},
    {3, "convergence at d=256", convergence},
    {4, "warm-start advantage", warm_start_advantage},
    {5, "embedding proximity", embedding_proximity},
    {6, "selection correctness", selection},
    {7, "sampling statistics", sampling},
    {8, "service round trip", service_round_trip},
};

}  // namespace

int main(int argc, char** argv) {
  int only = 0;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--criterion") == 0 && i + 1 < argc) {
      only = std::atoi(argv[++i]);
    } else {
      std::fprintf(stderr, "usage: %s [--criterion N]\n", argv[0]);
      return 2;
    }
  }
  bool all_pass = true;
  bool any = false;
  for (const auto& c : kCriteria) {
    if (only && c.id != only) continue;
    any = true;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("criterion %d %s: %s %s\n", c.id, c.name, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
    all_pass = all_pass && o.pass;
  }
  if (!any) {
    std::fprintf(stderr, "no criterion %d\n", only);
    return 2;
  }
  return all_pass ? 0 : 1;
}
