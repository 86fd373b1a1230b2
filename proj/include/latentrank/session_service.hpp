// SPDX-License-Identifier: Apache-2.0
//
// Interactive and scripted optimization sessions over JSON. Handlers are
// transport-independent (HttpServer maps routes onto them) and every
// response is a status code plus a JSON body; errors carry {code, message}.
//
// On-disk layout under the data directory:
//   sessions/<id>.jsonl   transcript: header line + one record per round
//   stores/<id>.json      prior store document
// Sessions are rebuilt by replaying their transcript on first access.
#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>

#include <json.hpp>

#include "latentrank/prior_store.hpp"
#include "latentrank/ranking_core.hpp"
#include "latentrank/transcript.hpp"

namespace latentrank {

struct ServiceOptions {
  std::filesystem::path data_dir = "data";
  OptimizerConfig default_config;  // elitism is chosen per session mode unless given
  std::uint64_t decoder_seed = 0;
  std::size_t embedding_dim = kDefaultEmbeddingDim;  // for toy_embed of bare texts
  bool overwrite_personalized = true;  // personalize result replaces the entry's z**
};

struct Response {
  int status = 200;
  nlohmann::json body;
};

enum class SessionMode { Human, Scripted };
enum class SessionPurpose { Representative, Personalize, StyleAware };

class SessionService {
 public:
  explicit SessionService(ServiceOptions options);
  ~SessionService();

  SessionService(const SessionService&) = delete;
  SessionService& operator=(const SessionService&) = delete;

  const ServiceOptions& options() const noexcept { return options_; }

  // POST /sessions
  Response create_session(const nlohmann::json& request);
  // GET /sessions/{id}/round
  Response get_round(const std::string& id, bool include_latents);
  // POST /sessions/{id}/feedback  body {round, kind, ranking}
  Response submit_feedback(const std::string& id, const nlohmann::json& body);
  // GET /sessions/{id}
  Response get_session(const std::string& id);

  // POST /stores, GET /stores, GET /stores/{id}
  Response create_store(const nlohmann::json& request);
  Response list_stores();
  Response get_store(const std::string& id);
  // POST /stores/{id}/select  body {embedding} | {text}
  Response select(const std::string& id, const nlohmann::json& request);
  // POST /stores/{id}/generate  body {embedding | text, count, seed}
  Response generate(const std::string& id, const nlohmann::json& request);

  std::filesystem::path session_path(const std::string& id) const;
  std::filesystem::path store_path(const std::string& id) const;

 private:
  struct Session;

  std::shared_ptr<Session> open_session(const std::string& id);
  nlohmann::json round_payload(const Session& s, const OptimizerState& state,
                               bool include_latents) const;
  nlohmann::json finish_payload(Session& s);
  std::mutex& store_mutex(const std::string& id);
  PriorStore load_store(const std::string& id) const;

  ServiceOptions options_;
  std::mutex sessions_mu_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::mutex stores_mu_;
  std::map<std::string, std::unique_ptr<std::mutex>> store_locks_;
};

}  // namespace latentrank
