// SPDX-License-Identifier: Apache-2.0
#include "latentrank/latentrank.h"

#include <cmath>
#include <cstring>
#include <limits>
#include <string>

#include "latentrank/benchmark.hpp"
#include "latentrank/decoder.hpp"
#include "latentrank/error.hpp"
#include "latentrank/http_server.hpp"
#include "latentrank/oracle.hpp"
#include "latentrank/prior_store.hpp"
#include "latentrank/ranking_core.hpp"
#include "latentrank/rng.hpp"
#include "latentrank/transcript.hpp"

using namespace latentrank;
using nlohmann::json;

struct lr_session {
  Transcript transcript;
  OptimizerState state;
};

struct lr_oracle {
  ScalarObjective objective;
  ScriptedOracle oracle;
};

struct lr_store {
  PriorStore store;
};

struct lr_server {
  HttpServer server;
};

namespace {

thread_local std::string last_error;

lr_status status_of(ErrorCode code) {
  switch (code) {
    case ErrorCode::Config: return LR_ERR_CONFIG;
    case ErrorCode::Feedback: return LR_ERR_FEEDBACK;
    case ErrorCode::Protocol: return LR_ERR_PROTOCOL;
    case ErrorCode::Lookup: return LR_ERR_LOOKUP;
    case ErrorCode::Domain: return LR_ERR_DOMAIN;
    case ErrorCode::Degenerate: return LR_ERR_DEGENERATE;
    case ErrorCode::Io: return LR_ERR_IO;
    case ErrorCode::Parse: return LR_ERR_PARSE;
    case ErrorCode::Replay: return LR_ERR_REPLAY;
  }
  return LR_ERR_INTERNAL;
}

struct InvalidArgument : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require(bool cond, const char* what) {
  if (!cond) throw InvalidArgument(what);
}

template <class F>
lr_status guarded(F&& f) noexcept {
  try {
    last_error.clear();
    f();
    return LR_OK;
  } catch (const Error& e) {
    last_error = e.what();
    return status_of(e.code());
  } catch (const InvalidArgument& e) {
    last_error = e.what();
    return LR_ERR_INVALID_ARGUMENT;
  } catch (const json::exception& e) {
    last_error = e.what();
    return LR_ERR_PARSE;
  } catch (const std::exception& e) {
    last_error = e.what();
    return LR_ERR_INTERNAL;
  } catch (...) {
    last_error = "unknown error";
    return LR_ERR_INTERNAL;
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

json parse_json(const char* text, const char* what) {
  if (!text) return json::object();
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorCode::Parse, std::string(what) + " is not valid JSON: " + e.what());
  }
}

json session_info(const OptimizerState& s) {
  json allowed = json::array();
  for (auto k : allowed_feedback(s.stage)) allowed.push_back(to_string(k));
  return {{"stage", to_string(s.stage)},
          {"round", s.candidates.round_index},
          {"tau", s.tau},
          {"m", s.candidates.points.size()},
          {"d", s.config.d},
          {"z_star", s.z_star},
          {"g_bar", s.g_bar},
          {"z_star_star", s.z_star_star ? json(*s.z_star_star) : json(nullptr)},
          {"allowed_feedback", std::move(allowed)}};
}

RepresentativeEntry entry_from_json(const json& j, std::size_t embedding_dim) {
  RepresentativeEntry e;
  e.id = j.at("id").get<std::string>();
  e.text = j.value("text", std::string{});
  e.embedding = j.contains("embedding") ? j.at("embedding").get<Embedding>()
                                        : toy_embed(e.text, embedding_dim);
  if (j.contains("z_star_star") && !j.at("z_star_star").is_null())
    e.z_star_star = j.at("z_star_star").get<LatentPoint>();
  e.sigma = j.value("sigma", kDefaultSigma);
  return e;
}

}  // namespace

extern "C" {

const char* lr_version(void) { return "0.1.0"; }

const char* lr_last_error(void) { return last_error.c_str(); }

const char* lr_status_name(lr_status status) {
  switch (status) {
    case LR_OK: return "ok";
    case LR_ERR_CONFIG: return "config_error";
    case LR_ERR_FEEDBACK: return "feedback_error";
    case LR_ERR_PROTOCOL: return "protocol_error";
    case LR_ERR_LOOKUP: return "lookup_error";
    case LR_ERR_DOMAIN: return "domain_error";
    case LR_ERR_DEGENERATE: return "degenerate_feedback";
    case LR_ERR_IO: return "io_error";
    case LR_ERR_PARSE: return "parse_error";
    case LR_ERR_REPLAY: return "replay_error";
    case LR_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case LR_ERR_INTERNAL: return "internal_error";
  }
  return "unknown";
}

void lr_string_free(char* s) { std::free(s); }

// --- sessions ----------------------------------------------------------------

lr_status lr_session_create(const char* config_json, lr_session** out) {
  return guarded([&] {
    require(out, "out is null");
    auto s = std::make_unique<lr_session>();
    s->transcript.header.config = config_from_json(parse_json(config_json, "config"));
    s->state = initial_state(s->transcript.header);
    *out = s.release();
  });
}

lr_status lr_session_create_warm(const char* config_json, const double* start, size_t d,
                                 int enter_stage2, lr_session** out) {
  return guarded([&] {
    require(out && start, "null argument");
    auto s = std::make_unique<lr_session>();
    auto& h = s->transcript.header;
    h.config = config_from_json(parse_json(config_json, "config"));
    if (d != h.config.d) fail(ErrorCode::Domain, "start point length does not match config d");
    h.start = enter_stage2 ? StartMode::WarmStage2 : StartMode::WarmStage1;
    h.start_point = LatentPoint(start, start + d);
    s->state = initial_state(h);
    *out = s.release();
  });
}

void lr_session_destroy(lr_session* session) { delete session; }

lr_status lr_session_info(const lr_session* session, char** json_out) {
  return guarded([&] {
    require(session && json_out, "null argument");
    *json_out = dup_string(session_info(session->state).dump());
  });
}

lr_status lr_session_candidates(const lr_session* session, double* out, size_t capacity,
                                size_t* written) {
  return guarded([&] {
    require(session, "session is null");
    const auto& pts = session->state.candidates.points;
    const std::size_t d = session->state.config.d;
    const std::size_t need = pts.size() * d;
    if (written) *written = need;
    if (!out) return;  // size query
    require(capacity >= need, "candidate buffer too small");
    for (std::size_t i = 0; i < pts.size(); ++i) std::copy(pts[i].begin(), pts[i].end(), out + i * d);
  });
}

lr_status lr_session_submit(lr_session* session, const char* feedback_json) {
  return guarded([&] {
    require(session && feedback_json, "null argument");
    const RankFeedback fb = feedback_from_json(parse_json(feedback_json, "feedback"));
    OptimizerState next = apply_feedback(session->state, fb);
    session->transcript.records.push_back(make_record(session->state, fb, next, nullptr));
    session->state = std::move(next);
  });
}

lr_status lr_session_result(const lr_session* session, double* out, size_t d) {
  return guarded([&] {
    require(session && out, "null argument");
    const auto& z = session->state.z_star_star;
    if (!z) fail(ErrorCode::Protocol, "no z** before the stage transition");
    require(d == z->size(), "result buffer length does not match d");
    std::copy(z->begin(), z->end(), out);
  });
}

lr_status lr_session_transcript(const lr_session* session, char** jsonl_out) {
  return guarded([&] {
    require(session && jsonl_out, "null argument");
    *jsonl_out = dup_string(write_transcript(session->transcript));
  });
}

lr_status lr_replay(const char* jsonl, char** info_json_out) {
  return guarded([&] {
    require(jsonl && info_json_out, "null argument");
    const auto state = replay(parse_transcript(jsonl));
    *info_json_out = dup_string(session_info(state).dump());
  });
}

// --- oracles -----------------------------------------------------------------

lr_status lr_oracle_create(const char* spec_json, size_t d, size_t k, lr_oracle** out) {
  return guarded([&] {
    require(spec_json && out, "null argument");
    const json spec = parse_json(spec_json, "objective spec");
    auto objective = ScalarObjective::from_json(spec, d);
    ScriptedOracle oracle(objective, spec.value("k", k), spec.value("noise_std", 0.0),
                          spec.value("seed", std::uint64_t{0}));
    *out = new lr_oracle{std::move(objective), std::move(oracle)};
  });
}

void lr_oracle_destroy(lr_oracle* oracle) { delete oracle; }

lr_status lr_oracle_evaluate(const lr_oracle* oracle, const double* z, size_t d,
                             double* value_out) {
  return guarded([&] {
    require(oracle && z && value_out, "null argument");
    *value_out = oracle->objective.evaluate(std::span<const double>(z, d));
  });
}

lr_status lr_oracle_rank(lr_oracle* oracle, const lr_session* session, size_t depth,
                         char** feedback_json_out) {
  return guarded([&] {
    require(oracle && session && feedback_json_out, "null argument");
    const auto fb = oracle->oracle.rank(session->state.candidates, depth);
    *feedback_json_out = dup_string(to_json(fb).dump());
  });
}

lr_status lr_run_scripted(const char* request_json, char** transcript_out, char** result_out) {
  return guarded([&] {
    require(request_json, "request is null");
    const json req = parse_json(request_json, "request");
    const OptimizerConfig config = config_from_json(req.value("config", json::object()));
    const json spec = req.at("objective");
    const auto objective = ScalarObjective::from_json(spec, config.d);
    ScriptedOracle oracle(objective, config.k, spec.value("noise_std", 0.0),
                          spec.value("seed", std::uint64_t{0}));
    StopRule stop;
    if (req.contains("rounds")) {
      const auto r = req.at("rounds").get<std::vector<std::size_t>>();
      if (r.size() != 2) fail(ErrorCode::Parse, "rounds must be [stage1, stage2]");
      stop = {r[0], r[1]};
    }
    const ScriptedRun run = run_scripted(config, oracle, stop);

    Transcript t;
    t.header.config = run.final_state.config;
    t.header.metadata = {{"objective", spec}};
    t.records = run.log;
    const double initial = run.log.empty() ? NAN : run.log.front().best_f.value_or(NAN);
    const json result{{"z_star_star", run.result},
                      {"final_f", objective.evaluate(run.result)},
                      {"initial_best_f", initial},
                      {"rounds", run.log.size()},
                      {"stage", to_string(run.final_state.stage)}};
    char* transcript = transcript_out ? dup_string(write_transcript(t)) : nullptr;
    if (result_out) *result_out = dup_string(result.dump());
    if (transcript_out) *transcript_out = transcript;
  });
}

// --- store -------------------------------------------------------------------

lr_status lr_store_create(size_t latent_dim, size_t embedding_dim, lr_store** out) {
  return guarded([&] {
    require(out, "out is null");
    *out = new lr_store{PriorStore(latent_dim, embedding_dim)};
  });
}

lr_status lr_store_load(const char* path, lr_store** out) {
  return guarded([&] {
    require(path && out, "null argument");
    *out = new lr_store{PriorStore::load(path)};
  });
}

lr_status lr_store_from_json(const char* text, lr_store** out) {
  return guarded([&] {
    require(text && out, "null argument");
    *out = new lr_store{PriorStore::from_json(parse_json(text, "store"))};
  });
}

void lr_store_destroy(lr_store* store) { delete store; }

lr_status lr_store_save(const lr_store* store, const char* path) {
  return guarded([&] {
    require(store && path, "null argument");
    store->store.save(path);
  });
}

lr_status lr_store_to_json(const lr_store* store, char** json_out) {
  return guarded([&] {
    require(store && json_out, "null argument");
    *json_out = dup_string(store->store.serialize());
  });
}

lr_status lr_store_build(const char* embeddings_path, size_t k, size_t max_iters, uint64_t seed,
                         size_t latent_dim, size_t embedding_dim, lr_store** out) {
  return guarded([&] {
    require(embeddings_path && out, "null argument");
    const auto items = read_embedding_records(embeddings_path, embedding_dim);
    if (items.empty()) fail(ErrorCode::Config, "no embeddings in " + std::string(embeddings_path));
    const auto km = kmeans_representatives(items, k, max_iters, seed, latent_dim);
    PriorStore store(latent_dim, items.front().embedding.size());
    for (const auto& e : km.representatives) store.add(e);
    *out = new lr_store{std::move(store)};
  });
}

size_t lr_store_size(const lr_store* store) { return store ? store->store.size() : 0; }
size_t lr_store_latent_dim(const lr_store* store) { return store ? store->store.latent_dim() : 0; }
size_t lr_store_embedding_dim(const lr_store* store) {
  return store ? store->store.embedding_dim() : 0;
}

lr_status lr_store_add(lr_store* store, const char* entry_json) {
  return guarded([&] {
    require(store && entry_json, "null argument");
    store->store.add(entry_from_json(parse_json(entry_json, "entry"), store->store.embedding_dim()));
  });
}

lr_status lr_store_entry(const lr_store* store, size_t index, char** entry_json_out) {
  return guarded([&] {
    require(store && entry_json_out, "null argument");
    if (index >= store->store.size()) fail(ErrorCode::Lookup, "entry index out of range");
    const auto& e = store->store.entry(index);
    const json j{{"id", e.id},
                 {"text", e.text},
                 {"embedding", e.embedding},
                 {"z_star_star", e.z_star_star},
                 {"sigma", e.sigma}};
    *entry_json_out = dup_string(j.dump());
  });
}

lr_status lr_store_attach(lr_store* store, const char* id, const double* z, size_t d,
                          double sigma) {
  return guarded([&] {
    require(store && id && z, "null argument");
    store->store.attach_optimum(id, LatentPoint(z, z + d), sigma);
  });
}

lr_status lr_store_select(const lr_store* store, const double* query, size_t n,
                          size_t* index_out, double* similarity_out) {
  return guarded([&] {
    require(store && query && index_out, "null argument");
    const std::span<const double> q(query, n);
    const std::size_t i = store->store.select_prior(q);
    *index_out = i;
    if (similarity_out) *similarity_out = cosine_similarity(q, store->store.entry(i).embedding);
  });
}

lr_status lr_store_select_text(const lr_store* store, const char* text, size_t* index_out,
                               double* similarity_out) {
  return guarded([&] {
    require(store && text && index_out, "null argument");
    const Embedding q = toy_embed(text, store->store.embedding_dim());
    const std::size_t i = store->store.select_prior(q);
    *index_out = i;
    if (similarity_out) *similarity_out = cosine_similarity(q, store->store.entry(i).embedding);
  });
}

lr_status lr_store_sample(const lr_store* store, size_t index, size_t count, uint64_t seed,
                          double* out, size_t capacity) {
  return guarded([&] {
    require(store && out, "null argument");
    if (index >= store->store.size()) fail(ErrorCode::Lookup, "entry index out of range");
    const std::size_t d = store->store.latent_dim();
    require(capacity >= count * d, "sample buffer too small");
    auto rng = make_stream(seed, StreamTag::Sampling, 0);
    const auto& entry = store->store.entry(index);
    for (std::size_t n = 0; n < count; ++n) {
      const auto z = sample_latent(entry, rng);
      std::copy(z.begin(), z.end(), out + n * d);
    }
  });
}

// --- embedding / decoding ------------------------------------------------------

lr_status lr_toy_embed(const char* text, size_t dim, double* out) {
  return guarded([&] {
    require(text && out, "null argument");
    const auto e = toy_embed(text, dim);
    std::copy(e.begin(), e.end(), out);
  });
}

lr_status lr_decode(const double* z, size_t d, const double* c, size_t e, uint64_t seed,
                    double* out, size_t capacity) {
  return guarded([&] {
    require(z && c && out, "null argument");
    const auto t = decode(std::span<const double>(z, d), std::span<const double>(c, e), seed);
    require(capacity >= t.x.size() + t.y.size(), "trajectory buffer too small");
    std::copy(t.x.begin(), t.x.end(), out);
    std::copy(t.y.begin(), t.y.end(), out + t.x.size());
  });
}

// --- reports -------------------------------------------------------------------

lr_status lr_benchmark(const char* grid_json, size_t threads, char** csv_out) {
  return guarded([&] {
    require(grid_json && csv_out, "null argument");
    const auto grid = grid_from_json(parse_json(grid_json, "benchmark grid"));
    *csv_out = dup_string(benchmark_csv(run_benchmark(grid, threads)));
  });
}

lr_status lr_sigma_sweep(const lr_store* store, const char* entry_id, const double* sigmas,
                         size_t n_sigmas, size_t draws, uint64_t seed, char** csv_out) {
  return guarded([&] {
    require(store && entry_id && sigmas && csv_out, "null argument");
    const auto& entry = store->store.entry(store->store.index_of(entry_id));
    const auto rows = sigma_sweep(entry, std::span<const double>(sigmas, n_sigmas), draws, seed);
    *csv_out = dup_string(sigma_sweep_csv(rows));
  });
}

// --- server --------------------------------------------------------------------

lr_status lr_server_create(const char* options_json, lr_server** out) {
  return guarded([&] {
    require(out, "out is null");
    const json j = parse_json(options_json, "server options");
    ServiceOptions opt;
    if (j.contains("data_dir")) opt.data_dir = j.at("data_dir").get<std::string>();
    opt.decoder_seed = j.value("decoder_seed", opt.decoder_seed);
    opt.embedding_dim = j.value("embedding_dim", opt.embedding_dim);
    opt.overwrite_personalized = j.value("overwrite", opt.overwrite_personalized);
    if (j.contains("config")) opt.default_config = config_from_json(j.at("config"));
    opt.default_config.validate();
    *out = new lr_server{HttpServer(std::move(opt))};
  });
}

lr_status lr_server_bind(lr_server* server, const char* host, int port, int* port_out) {
  return guarded([&] {
    require(server, "server is null");
    const int bound = server->server.bind(host ? host : "127.0.0.1", port);
    if (port_out) *port_out = bound;
  });
}

lr_status lr_server_run(lr_server* server) {
  return guarded([&] {
    require(server, "server is null");
    server->server.listen();
  });
}

void lr_server_stop(lr_server* server) {
  if (server) server->server.stop();
}

void lr_server_destroy(lr_server* server) { delete server; }

}  // extern "C"
