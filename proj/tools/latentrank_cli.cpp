// SPDX-License-Identifier: Apache-2.0
//
// latentrank command-line front end. Everything goes through the C API.
#include <atomic>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <pthread.h>

#include <CLI11.hpp>
#include <json.hpp>

#include "latentrank/latentrank.h"

using nlohmann::json;

namespace {

struct CliError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void check(lr_status st) {
  if (st != LR_OK)
    throw CliError(std::string(lr_status_name(st)) + ": " + lr_last_error());
}

std::string take(char* s) {
  std::string out = s ? s : "";
  lr_string_free(s);
  return out;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CliError("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::string& path, const std::string& content) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CliError("cannot write " + path);
  out << content;
  if (!out) throw CliError("failed writing " + path);
}

// Output to a file, or stdout when the path is empty or "-".
void emit(const std::string& path, const std::string& content) {
  if (path.empty() || path == "-")
    std::cout << content << std::flush;
  else
    write_file(path, content);
}

// JSON given inline or as @file.
json json_arg(const std::string& value) {
  const std::string text = !value.empty() && value[0] == '@' ? read_file(value.substr(1)) : value;
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw CliError("invalid JSON argument: " + std::string(e.what()));
  }
}

std::vector<std::size_t> parse_rounds(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, ',')) {
    try {
      std::size_t used = 0;
      const long long v = std::stoll(part, &used);
      if (used != part.size() || v < 0) throw std::invalid_argument(part);
      out.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw CliError("--rounds expects 'stage1,stage2', got '" + s + "'");
    }
  }
  if (out.size() != 2) throw CliError("--rounds expects 'stage1,stage2', got '" + s + "'");
  return out;
}

struct StoreHandle {
  lr_store* p = nullptr;
  ~StoreHandle() { lr_store_destroy(p); }
};

// Optimizer flags shared by optimize and benchmark.
struct ConfigFlags {
  std::string config_file;
  std::optional<std::size_t> d, m, k, max1, max2;
  std::optional<double> eta, gamma, mu1, mu2, mu3;
  bool no_elitism = false;
  std::string mu_schedule;

  void add(CLI::App* app) {
    app->add_option("--config", config_file, "OptimizerConfig JSON (inline or @file)");
    app->add_option("--d", d, "Latent dimension");
    app->add_option("--m", m, "Candidates per round");
    app->add_option("--k", k, "Ranking depth (defaults to m)");
    app->add_option("--eta", eta, "Step size");
    app->add_option("--gamma", gamma, "Shrinking rate in (0,1)");
    app->add_option("--mu1", mu1, "Round-0 candidate std");
    app->add_option("--mu2", mu2, "Stage-1 perturbation std");
    app->add_option("--mu3", mu3, "Stage-2 perturbation std");
    app->add_option("--max-stage1", max1, "Stage-1 round cap");
    app->add_option("--max-stage2", max2, "Stage-2 round cap");
    app->add_flag("--no-elitism", no_elitism, "Do not keep z** among stage-2 candidates");
    app->add_option("--mu-schedule", mu_schedule, "fixed | gamma_decay");
  }

  json build(std::uint64_t seed) const {
    json c = config_file.empty() ? json::object() : json_arg(config_file);
    auto put = [&](const char* key, const auto& v) {
      if (v) c[key] = *v;
    };
    put("d", d);
    put("m", m);
    put("k", k);
    put("eta", eta);
    put("gamma", gamma);
    put("mu1", mu1);
    put("mu2", mu2);
    put("mu3", mu3);
    put("max_stage1_rounds", max1);
    put("max_stage2_rounds", max2);
    if (no_elitism) c["elitism"] = false;
    if (!mu_schedule.empty()) c["mu_schedule"] = mu_schedule;
    if (!c.contains("seed")) c["seed"] = seed;
    return c;
  }
};

struct ObjectiveFlags {
  std::string params;
  double noise = 0.0;
  std::uint64_t oracle_seed = 0;

  void add(CLI::App* app) {
    app->add_option("--params", params, "Objective parameters JSON (inline or @file)");
    app->add_option("--noise", noise, "Std of ranking noise added to scores");
    app->add_option("--oracle-seed", oracle_seed, "Seed of the oracle noise stream");
  }

  json build(const std::string& objective) const {
    json spec;
    if (!objective.empty() && (objective[0] == '{' || objective[0] == '@'))
      spec = json_arg(objective);
    else
      spec = {{"kind", objective}};
    if (!params.empty()) spec["params"] = json_arg(params);
    if (!spec.contains("noise_std")) spec["noise_std"] = noise;
    if (!spec.contains("seed")) spec["seed"] = oracle_seed;
    return spec;
  }
};

std::vector<double> embedding_arg(const std::string& value) {
  const json j = json_arg(value);
  if (j.is_object() && j.contains("embedding")) return j.at("embedding").get<std::vector<double>>();
  return j.get<std::vector<double>>();
}

std::vector<double> latent_arg(const std::string& value) {
  const json j = json_arg(value);
  if (j.is_object() && j.contains("z_star_star")) return j.at("z_star_star").get<std::vector<double>>();
  return j.get<std::vector<double>>();
}

// Query embedding for select/sample: explicit vector or toy embedding of text.
std::vector<double> query_arg(const StoreHandle& store, const std::string& text,
                              const std::string& embedding) {
  if (!embedding.empty()) return embedding_arg(embedding);
  if (text.empty()) throw CliError("need --text or --embedding");
  std::vector<double> q(lr_store_embedding_dim(store.p));
  check(lr_toy_embed(text.c_str(), q.size(), q.data()));
  return q;
}

json entry_json(const StoreHandle& store, std::size_t index) {
  return json::parse(take([&] {
    char* s = nullptr;
    check(lr_store_entry(store.p, index, &s));
    return s;
  }()));
}

std::atomic<lr_server*> running_server{nullptr};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"latentrank: ranking-driven latent search, prior stores and session service"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand
  app.failure_message(CLI::FailureMessage::help);
  app.set_version_flag("--version", std::string(lr_version()));

  std::uint64_t seed = 0;
  std::string data_dir = "data";
  std::string output;
  app.add_option("--seed", seed, "Seed of the optimizer / sampler streams")->capture_default_str();
  app.add_option("--data-dir", data_dir, "Service data directory")
      ->envname("LATENTRANK_DATA_DIR")
      ->capture_default_str();
  app.add_option("--output,-o", output, "Primary output file ('-' for stdout)");

  // optimize ----------------------------------------------------------------
  auto* opt = app.add_subcommand("optimize", "Run a scripted optimization and write a transcript");
  std::string objective;
  std::string rounds = "10,5";
  std::string result_path;
  ConfigFlags opt_config;
  ObjectiveFlags opt_objective;
  opt->add_option("--objective", objective,
                  "sphere | rosenbrock | embedding_quadratic | trajectory_distance, or a JSON spec")
      ->required();
  opt->add_option("--rounds", rounds, "Stage-1 and stage-2 round counts 's1,s2'")
      ->capture_default_str();
  opt->add_option("--result", result_path, "Final z** JSON (default: <output>.result.json)");
  opt_config.add(opt);
  opt_objective.add(opt);

  // benchmark ---------------------------------------------------------------
  auto* bench = app.add_subcommand("benchmark", "Run a grid of scripted optimizations to CSV");
  std::string grid_file;
  std::vector<std::string> bench_objectives;
  std::size_t bench_seeds = 5;
  std::string bench_rounds = "10,5";
  std::size_t threads = std::max(1u, std::thread::hardware_concurrency());
  bool sweep = false;
  std::string sweep_store, sweep_entry;
  std::vector<double> sweep_sigmas{0.1, 0.2, 0.3, 0.4, 0.5};
  std::size_t sweep_draws = 10000;
  ConfigFlags bench_config;
  ObjectiveFlags bench_objective;
  bench->add_option("--grid", grid_file, "Grid JSON {objectives, configs, seeds, rounds}");
  bench->add_option("--objectives", bench_objectives, "Objective kinds (without --grid)")
      ->delimiter(',');
  bench->add_option("--seeds", bench_seeds, "Seeds 0..N-1 (without --grid)")->capture_default_str();
  bench->add_option("--rounds", bench_rounds, "'s1,s2' (without --grid)")->capture_default_str();
  bench->add_option("--threads", threads, "Worker threads");
  bench->add_flag("--sigma-sweep", sweep, "Report sample dispersion per sigma for a store entry");
  bench->add_option("--store", sweep_store, "Store file (sigma sweep)");
  bench->add_option("--entry", sweep_entry, "Entry id (sigma sweep; default first entry)");
  bench->add_option("--sigmas", sweep_sigmas, "Sigma values")->delimiter(',')->capture_default_str();
  bench->add_option("--draws", sweep_draws, "Draws per sigma")->capture_default_str();
  bench_config.add(bench);
  bench_objective.add(bench);

  // priors ------------------------------------------------------------------
  auto* priors = app.add_subcommand("priors", "Build and query prior stores");
  priors->require_subcommand(1);
  priors->fallthrough();
  std::string store_path;

  auto* build = priors->add_subcommand("build", "K-means representatives from embedding JSONL");
  std::string embeddings_path;
  std::size_t build_k = 5, build_iters = 100, latent_dim = 256, embedding_dim = 768;
  build->add_option("--embeddings", embeddings_path, "JSONL {id, text, embedding?}")
      ->required()
      ->check(CLI::ExistingFile);
  build->add_option("--k", build_k, "Number of representatives")->capture_default_str();
  build->add_option("--iters", build_iters, "Maximum Lloyd iterations")->capture_default_str();
  build->add_option("--latent-dim", latent_dim, "Latent dimension d")->capture_default_str();
  build->add_option("--embedding-dim", embedding_dim, "Toy embedding size for text-only lines")
      ->capture_default_str();

  auto* attach = priors->add_subcommand("attach", "Bind an optimized latent to an entry");
  std::string attach_id, attach_latent, attach_transcript;
  std::optional<double> attach_sigma;
  attach->add_option("--store", store_path, "Store file")->required()->check(CLI::ExistingFile);
  attach->add_option("--id", attach_id, "Entry id")->required();
  auto* latent_opt =
      attach->add_option("--latent", attach_latent, "z** as JSON array or result JSON (or @file)");
  auto* transcript_opt = attach->add_option("--transcript", attach_transcript,
                                            "Take z** from the end of a transcript JSONL");
  latent_opt->excludes(transcript_opt);
  attach->add_option("--sigma", attach_sigma, "Sampling std (default: keep)");

  auto* sel = priors->add_subcommand("select", "Entry of maximal cosine similarity");
  std::string query_text, query_embedding;
  sel->add_option("--store", store_path, "Store file")->required()->check(CLI::ExistingFile);
  sel->add_option("--text", query_text, "Query text (toy embedding)");
  sel->add_option("--embedding", query_embedding, "Query embedding JSON (or @file)");

  auto* sample = priors->add_subcommand("sample", "Draw latents around the selected entry");
  std::size_t count = 1;
  std::string sample_id;
  bool trajectories = false;
  std::uint64_t decoder_seed = 0;
  sample->add_option("--store", store_path, "Store file")->required()->check(CLI::ExistingFile);
  sample->add_option("--text", query_text, "Query text (toy embedding)");
  sample->add_option("--embedding", query_embedding, "Query embedding JSON (or @file)");
  sample->add_option("--id", sample_id, "Sample this entry instead of selecting");
  sample->add_option("--count", count, "Number of draws")->capture_default_str();
  sample->add_flag("--trajectories", trajectories, "Also decode each latent");
  sample->add_option("--decoder-seed", decoder_seed, "Toy decoder seed")->capture_default_str();

  // serve -------------------------------------------------------------------
  auto* serve = app.add_subcommand("serve", "Run the HTTP session service");
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string serve_config;
  std::uint64_t serve_decoder_seed = 0;
  std::size_t serve_embedding_dim = 768;
  bool keep_entries = false;
  serve->add_option("--host", host, "Bind address")->envname("LATENTRANK_HOST")->capture_default_str();
  serve->add_option("--port", port, "Port (0 picks a free one)")
      ->envname("LATENTRANK_PORT")
      ->capture_default_str();
  serve->add_option("--config", serve_config, "Default OptimizerConfig JSON (inline or @file)")
      ->envname("LATENTRANK_CONFIG");
  serve->add_option("--decoder-seed", serve_decoder_seed, "Toy decoder seed")->capture_default_str();
  serve->add_option("--embedding-dim", serve_embedding_dim, "Toy embedding size")
      ->capture_default_str();
  serve->add_flag("--keep-entries", keep_entries,
                  "Personalize results go to new entries instead of replacing z**");

  // replay ------------------------------------------------------------------
  auto* rep = app.add_subcommand("replay", "Re-run a transcript and print the final state");
  std::string replay_path;
  rep->add_option("transcript", replay_path, "Transcript JSONL")->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (opt->parsed()) {
      const auto r = parse_rounds(rounds);
      const json request{{"config", opt_config.build(seed)},
                         {"objective", opt_objective.build(objective)},
                         {"rounds", r}};
      char* transcript = nullptr;
      char* result = nullptr;
      check(lr_run_scripted(request.dump().c_str(), &transcript, &result));
      const std::string transcript_text = take(transcript);
      const json res = json::parse(take(result));
      const std::string out = output.empty() ? "transcript.jsonl" : output;
      emit(out, transcript_text);
      std::string rpath = result_path;
      if (rpath.empty())
        rpath = out == "-" ? "" : std::filesystem::path(out).replace_extension(".result.json").string();
      if (!rpath.empty()) write_file(rpath, res.dump(2) + "\n");
      std::ostream& log = out == "-" ? std::cerr : std::cout;
      log.precision(17);
      log << "rounds=" << res.at("rounds").get<std::size_t>()
          << " initial_best_f=" << res.at("initial_best_f").get<double>()
          << " final_f=" << res.at("final_f").get<double>() << "\n";
      return 0;
    }

    if (bench->parsed()) {
      std::string csv;
      if (sweep) {
        if (sweep_store.empty()) throw CliError("--sigma-sweep needs --store");
        StoreHandle store;
        check(lr_store_load(sweep_store.c_str(), &store.p));
        std::string id = sweep_entry;
        if (id.empty()) {
          if (lr_store_size(store.p) == 0) throw CliError("store has no entries");
          id = entry_json(store, 0).at("id").get<std::string>();
        }
        char* s = nullptr;
        check(lr_sigma_sweep(store.p, id.c_str(), sweep_sigmas.data(), sweep_sigmas.size(),
                             sweep_draws, seed, &s));
        csv = take(s);
      } else {
        json grid;
        if (!grid_file.empty()) {
          grid = json_arg("@" + grid_file);
        } else {
          if (bench_objectives.empty()) throw CliError("benchmark needs --grid or --objectives");
          json objs = json::array();
          for (const auto& o : bench_objectives) objs.push_back(bench_objective.build(o));
          grid = {{"objectives", objs},
                  {"configs", json::array({bench_config.build(seed)})},
                  {"seeds", bench_seeds},
                  {"rounds", parse_rounds(bench_rounds)}};
        }
        char* s = nullptr;
        check(lr_benchmark(grid.dump().c_str(), threads, &s));
        csv = take(s);
      }
      emit(output, csv);
      return 0;
    }

    if (build->parsed()) {
      StoreHandle store;
      check(lr_store_build(embeddings_path.c_str(), build_k, build_iters, seed, latent_dim,
                           embedding_dim, &store.p));
      const std::string out = output.empty() ? "store.json" : output;
      if (out == "-") {
        char* s = nullptr;
        check(lr_store_to_json(store.p, &s));
        std::cout << take(s);
      } else {
        check(lr_store_save(store.p, out.c_str()));
        std::cout << "wrote " << lr_store_size(store.p) << " entries to " << out << "\n";
      }
      return 0;
    }

    if (attach->parsed()) {
      StoreHandle store;
      check(lr_store_load(store_path.c_str(), &store.p));
      std::vector<double> z;
      if (!attach_transcript.empty()) {
        char* s = nullptr;
        check(lr_replay(read_file(attach_transcript).c_str(), &s));
        const json info = json::parse(take(s));
        if (info.at("z_star_star").is_null()) throw CliError("transcript has no z** yet");
        z = info.at("z_star_star").get<std::vector<double>>();
      } else if (!attach_latent.empty()) {
        z = latent_arg(attach_latent);
      } else {
        throw CliError("attach needs --latent or --transcript");
      }
      double sigma = 0.2;
      if (attach_sigma) {
        sigma = *attach_sigma;
      } else {
        for (std::size_t i = 0; i < lr_store_size(store.p); ++i) {
          const json e = entry_json(store, i);
          if (e.at("id") == attach_id) sigma = e.at("sigma").get<double>();
        }
      }
      check(lr_store_attach(store.p, attach_id.c_str(), z.data(), z.size(), sigma));
      const std::string out = output.empty() ? store_path : output;
      check(lr_store_save(store.p, out.c_str()));
      return 0;
    }

    if (sel->parsed()) {
      StoreHandle store;
      check(lr_store_load(store_path.c_str(), &store.p));
      const auto q = query_arg(store, query_text, query_embedding);
      std::size_t index = 0;
      double similarity = 0.0;
      check(lr_store_select(store.p, q.data(), q.size(), &index, &similarity));
      const json e = entry_json(store, index);
      const json out{{"index", index}, {"id", e.at("id")}, {"text", e.at("text")},
                     {"similarity", similarity}};
      emit(output, out.dump() + "\n");
      return 0;
    }

    if (sample->parsed()) {
      StoreHandle store;
      check(lr_store_load(store_path.c_str(), &store.p));
      std::size_t index = 0;
      std::vector<double> c;
      if (!sample_id.empty()) {
        bool found = false;
        for (std::size_t i = 0; i < lr_store_size(store.p) && !found; ++i)
          if (entry_json(store, i).at("id") == sample_id) index = i, found = true;
        if (!found) throw CliError("lookup_error: no entry '" + sample_id + "'");
        c = (query_text.empty() && query_embedding.empty())
                ? entry_json(store, index).at("embedding").get<std::vector<double>>()
                : query_arg(store, query_text, query_embedding);
      } else {
        c = query_arg(store, query_text, query_embedding);
        check(lr_store_select(store.p, c.data(), c.size(), &index, nullptr));
      }
      const std::size_t d = lr_store_latent_dim(store.p);
      std::vector<double> draws(count * d);
      check(lr_store_sample(store.p, index, count, seed, draws.data(), draws.size()));
      const std::string id = entry_json(store, index).at("id").get<std::string>();
      std::string lines;
      std::vector<double> xy(240);
      for (std::size_t n = 0; n < count; ++n) {
        std::vector<double> z(draws.begin() + n * d, draws.begin() + (n + 1) * d);
        json line{{"entry", id}, {"latent", z}};
        if (trajectories) {
          check(lr_decode(z.data(), d, c.data(), c.size(), decoder_seed, xy.data(), xy.size()));
          json pts = json::array();
          for (std::size_t t = 0; t < 120; ++t) pts.push_back({xy[t], xy[120 + t]});
          line["trajectory"] = {{"points", pts}};
        }
        lines += line.dump() + "\n";
      }
      emit(output, lines);
      return 0;
    }

    if (serve->parsed()) {
      json options{{"data_dir", data_dir},
                   {"decoder_seed", serve_decoder_seed},
                   {"embedding_dim", serve_embedding_dim},
                   {"overwrite", !keep_entries}};
      if (!serve_config.empty()) options["config"] = json_arg(serve_config);

      // Signals are taken synchronously by a watcher thread so shutdown runs
      // outside of a signal handler.
      sigset_t set;
      sigemptyset(&set);
      sigaddset(&set, SIGINT);
      sigaddset(&set, SIGTERM);
      pthread_sigmask(SIG_BLOCK, &set, nullptr);

      lr_server* server = nullptr;
      check(lr_server_create(options.dump().c_str(), &server));
      std::unique_ptr<lr_server, void (*)(lr_server*)> guard(server, lr_server_destroy);
      int bound = 0;
      check(lr_server_bind(server, host.c_str(), port, &bound));
      std::cout << "listening on http://" << host << ":" << bound << " data-dir=" << data_dir
                << std::endl;

      running_server = server;
      std::thread watcher([&set] {
        int sig = 0;
        sigwait(&set, &sig);
        if (auto* s = running_server.exchange(nullptr)) lr_server_stop(s);
      });
      const lr_status st = lr_server_run(server);
      const std::string err = lr_last_error();
      // Wake the watcher if the server ended without a signal.
      if (running_server.exchange(nullptr)) pthread_kill(watcher.native_handle(), SIGTERM);
      watcher.join();
      if (st != LR_OK) throw CliError(std::string(lr_status_name(st)) + ": " + err);
      std::cout << "stopped" << std::endl;
      return 0;
    }

    if (rep->parsed()) {
      char* s = nullptr;
      check(lr_replay(read_file(replay_path).c_str(), &s));
      emit(output, json::parse(take(s)).dump(2) + "\n");
      return 0;
    }
  } catch (const CliError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
