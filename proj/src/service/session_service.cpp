// SPDX-License-Identifier: Apache-2.0
#include "latentrank/session_service.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

#include "latentrank/decoder.hpp"
#include "latentrank/error.hpp"
#include "latentrank/rng.hpp"

namespace latentrank {

using nlohmann::json;

namespace {

constexpr const char* kStage1Prompt =
    "Enter the ranking of the candidate IDs from best to worst, or only the ID of the best "
    "candidate to move on to refinement.";
constexpr const char* kStage2Prompt =
    "Enter the ID of the best candidate, or accept one to finish.";

const char* to_string(SessionMode m) { return m == SessionMode::Human ? "human" : "scripted"; }

SessionMode mode_from_string(const std::string& s) {
  if (s == "human") return SessionMode::Human;
  if (s == "scripted") return SessionMode::Scripted;
  fail(ErrorCode::Config, "unknown session mode '" + s + "'");
}

const char* to_string(SessionPurpose p) {
  switch (p) {
    case SessionPurpose::Representative: return "representative";
    case SessionPurpose::Personalize: return "personalize";
    case SessionPurpose::StyleAware: return "style_aware";
  }
  return "?";
}

SessionPurpose purpose_from_string(const std::string& s) {
  if (s == "representative") return SessionPurpose::Representative;
  if (s == "personalize") return SessionPurpose::Personalize;
  if (s == "style_aware") return SessionPurpose::StyleAware;
  fail(ErrorCode::Config, "unknown session purpose '" + s + "'");
}

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::Config:
    case ErrorCode::Parse:
    case ErrorCode::Domain: return 400;
    case ErrorCode::Lookup: return 404;
    case ErrorCode::Feedback:
    case ErrorCode::Protocol:
    case ErrorCode::Degenerate: return 422;
    case ErrorCode::Io:
    case ErrorCode::Replay: return 500;
  }
  return 500;
}

Response error_response(int status, const std::string& code, const std::string& message,
                        json extra = json::object()) {
  extra["code"] = code;
  extra["message"] = message;
  return {status, std::move(extra)};
}

template <class F>
Response guarded(F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    return error_response(http_status(e.code()), to_string(e.code()), e.what());
  } catch (const json::exception& e) {
    return error_response(400, "parse_error", e.what());
  } catch (const std::exception& e) {
    return error_response(500, "internal_error", e.what());
  }
}

bool valid_id(const std::string& id) {
  return !id.empty() && id.size() <= 128 &&
         std::all_of(id.begin(), id.end(), [](unsigned char c) {
           return std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '@';
         }) &&
         id.front() != '.';
}

void require_valid_id(const std::string& id, const char* what) {
  if (!valid_id(id)) fail(ErrorCode::Config, std::string("invalid ") + what + " id '" + id + "'");
}

std::string random_id() {
  static std::mutex mu;
  static std::mt19937_64 rng{std::random_device{}()};
  std::lock_guard lock(mu);
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << rng();
  return os.str();
}

std::string iso_time(std::chrono::system_clock::time_point t) {
  const std::time_t tt = std::chrono::system_clock::to_time_t(t);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

Embedding query_embedding(const json& request, std::size_t dim) {
  if (request.contains("embedding")) return request.at("embedding").get<Embedding>();
  if (request.contains("text")) return toy_embed(request.at("text").get<std::string>(), dim);
  fail(ErrorCode::Config, "request needs an 'embedding' or a 'text'");
}

json entry_summary(const RepresentativeEntry& e) {
  return {{"id", e.id}, {"text", e.text}, {"sigma", e.sigma}, {"z_star_star", e.z_star_star}};
}

}  // namespace

struct SessionService::Session {
  std::mutex mu;
  std::string id;
  std::filesystem::path file;
  Transcript transcript;
  OptimizerState state;
  Embedding condition;
  std::shared_ptr<const ToyDecoder> decoder;
  std::chrono::system_clock::time_point updated_at;
  json final_info;  // set once the session is finished and side effects ran

  const json& meta() const { return transcript.header.metadata; }
};

SessionService::SessionService(ServiceOptions options) : options_(std::move(options)) {
  std::filesystem::create_directories(options_.data_dir / "sessions");
  std::filesystem::create_directories(options_.data_dir / "stores");
}

SessionService::~SessionService() = default;

std::filesystem::path SessionService::session_path(const std::string& id) const {
  return options_.data_dir / "sessions" / (id + ".jsonl");
}

std::filesystem::path SessionService::store_path(const std::string& id) const {
  return options_.data_dir / "stores" / (id + ".json");
}

std::mutex& SessionService::store_mutex(const std::string& id) {
  std::lock_guard lock(stores_mu_);
  auto& slot = store_locks_[id];
  if (!slot) slot = std::make_unique<std::mutex>();
  return *slot;
}

PriorStore SessionService::load_store(const std::string& id) const {
  require_valid_id(id, "store");
  const auto path = store_path(id);
  if (!std::filesystem::exists(path)) fail(ErrorCode::Lookup, "no store with id '" + id + "'");
  return PriorStore::load(path);
}

// --- sessions ---------------------------------------------------------------

Response SessionService::create_session(const json& request) {
  return guarded([&]() -> Response {
    if (!request.is_object()) fail(ErrorCode::Parse, "request body must be a JSON object");
    const auto purpose = purpose_from_string(request.value("purpose", "representative"));
    const auto mode = mode_from_string(request.value("mode", "human"));

    const json config_json = request.value("config", json::object());
    OptimizerConfig base = options_.default_config;
    base.elitism = (mode == SessionMode::Scripted);
    if (!config_json.contains("k")) base.k = base.m;

    std::optional<PriorStore> store;
    std::string store_id = request.value("store_id", std::string{});
    if (!store_id.empty()) store = load_store(store_id);

    std::string entry_id = request.value("entry_id", std::string{});
    const std::string warm_id = request.value("warm_start_id", std::string{});
    if (purpose == SessionPurpose::StyleAware && !warm_id.empty())
      fail(ErrorCode::Config, "style-aware sessions optimize from scratch; drop warm_start_id");
    if (purpose != SessionPurpose::Personalize && !warm_id.empty())
      fail(ErrorCode::Config, "warm_start_id is only valid for personalize sessions");

    std::string text = request.value("condition_text", std::string{});
    std::optional<Embedding> embedding;
    if (request.contains("condition_embedding") && !request.at("condition_embedding").is_null())
      embedding = request.at("condition_embedding").get<Embedding>();

    OptimizerConfig config = config_from_json(config_json, base);
    if (store && !config_json.contains("d")) config.d = store->latent_dim();
    if (store && config.d != store->latent_dim())
      fail(ErrorCode::Config, "config d does not match the store's latent dimension");
    if (!config_json.contains("seed")) config.seed = derive_seed(std::random_device{}(), StreamTag::Init, 0);
    config.validate();

    TranscriptHeader header;
    header.config = config;

    if (purpose == SessionPurpose::Personalize) {
      if (!store) fail(ErrorCode::Lookup, "personalize sessions need a store_id");
      std::size_t index = 0;
      if (!warm_id.empty()) {
        index = store->index_of(warm_id);
      } else {
        if (!embedding && text.empty())
          fail(ErrorCode::Config, "personalize needs warm_start_id or a condition to look up");
        const Embedding q = embedding ? *embedding : toy_embed(text, store->embedding_dim());
        index = store->select_prior(q);
      }
      const auto& entry = store->entry(index);
      if (entry_id.empty()) entry_id = entry.id;
      if (text.empty()) text = entry.text;
      if (!embedding) embedding = entry.embedding;
      header.start = request.value("full_two_stage", false) ? StartMode::WarmStage1
                                                            : StartMode::WarmStage2;
      header.start_point = entry.z_star_star;
    } else if (store && !entry_id.empty()) {
      if (auto idx = store->find(entry_id)) {
        const auto& entry = store->entry(*idx);
        if (text.empty()) text = entry.text;
        if (!embedding) embedding = entry.embedding;
      }
    }

    if (!embedding) {
      if (text.empty()) fail(ErrorCode::Config, "session needs condition_text or condition_embedding");
      embedding = toy_embed(text, store ? store->embedding_dim() : options_.embedding_dim);
    }
    if (embedding->empty()) fail(ErrorCode::Domain, "condition embedding must not be empty");
    if (store && embedding->size() != store->embedding_dim())
      fail(ErrorCode::Domain, "condition embedding does not match the store's embedding dimension");

    auto s = std::make_shared<Session>();
    s->id = random_id();
    s->file = session_path(s->id);
    const auto now = std::chrono::system_clock::now();
    header.metadata = {{"id", s->id},
                       {"mode", to_string(mode)},
                       {"purpose", to_string(purpose)},
                       {"condition_text", text},
                       {"condition_embedding", *embedding},
                       {"overwrite", request.value("overwrite", options_.overwrite_personalized)},
                       {"decoder_seed", options_.decoder_seed},
                       {"created_at", iso_time(now)}};
    if (store) header.metadata["store_id"] = store_id;
    if (!entry_id.empty()) header.metadata["entry_id"] = entry_id;

    s->transcript.header = header;
    s->state = initial_state(header);
    s->condition = *embedding;
    s->decoder = std::make_shared<const ToyDecoder>(config.d, embedding->size(), options_.decoder_seed);
    s->updated_at = now;

    {
      std::ofstream out(s->file, std::ios::binary | std::ios::trunc);
      if (!out) fail(ErrorCode::Io, "cannot create " + s->file.string());
      out << to_jsonl_line(to_json(header));
      out.flush();
      if (!out) fail(ErrorCode::Io, "cannot write " + s->file.string());
    }
    {
      std::lock_guard lock(sessions_mu_);
      sessions_[s->id] = s;
    }

    std::lock_guard lock(s->mu);
    json body{{"id", s->id},
              {"purpose", to_string(purpose)},
              {"mode", to_string(mode)},
              {"config", to_json(config)},
              {"round", round_payload(*s, s->state, request.value("latents", false))}};
    return {201, std::move(body)};
  });
}

std::shared_ptr<SessionService::Session> SessionService::open_session(const std::string& id) {
  require_valid_id(id, "session");
  std::lock_guard lock(sessions_mu_);
  if (auto it = sessions_.find(id); it != sessions_.end()) return it->second;

  const auto path = session_path(id);
  if (!std::filesystem::exists(path)) fail(ErrorCode::Lookup, "no session with id '" + id + "'");
  auto s = std::make_shared<Session>();
  s->id = id;
  s->file = path;
  s->transcript = read_transcript(path);
  s->state = replay(s->transcript);
  const auto& meta = s->transcript.header.metadata;
  s->condition = meta.at("condition_embedding").get<Embedding>();
  s->decoder = std::make_shared<const ToyDecoder>(s->state.config.d, s->condition.size(),
                                                  meta.value("decoder_seed", std::uint64_t{0}));
  s->updated_at = std::chrono::file_clock::to_sys(std::filesystem::last_write_time(path));
  if (s->state.stage == Stage::Finished) {
    // Side effects already ran before the restart; only rebuild the payload.
    s->final_info = {{"status", "finished"}, {"z_star_star", *s->state.z_star_star}};
  }
  sessions_[id] = s;
  return s;
}

json SessionService::round_payload(const Session& s, const OptimizerState& state,
                                   bool include_latents) const {
  json candidates = json::array();
  for (const auto& z : state.candidates.points)
    candidates.push_back(to_json(s.decoder->decode(z, s.condition)));
  json allowed = json::array();
  for (auto k : allowed_feedback(state.stage)) allowed.push_back(to_string(k));
  json payload{{"session_id", s.id},
               {"round", state.candidates.round_index},
               {"stage", to_string(state.stage)},
               {"prompt_kind", state.stage == Stage::Stage1 ? "rank_or_best" : "best_or_accept"},
               {"prompt", state.stage == Stage::Stage1 ? kStage1Prompt : kStage2Prompt},
               {"m", state.candidates.points.size()},
               {"tau", state.tau},
               {"candidates", std::move(candidates)},
               {"allowed_feedback", std::move(allowed)}};
  if (include_latents) payload["latents"] = state.candidates.points;
  return payload;
}

json SessionService::finish_payload(Session& s) {
  if (!s.final_info.is_null()) return s.final_info;
  const auto& z = *s.state.z_star_star;
  json info{{"status", "finished"}, {"z_star_star", z}};

  const json& meta = s.meta();
  const std::string store_id = meta.value("store_id", std::string{});
  if (!store_id.empty()) {
    std::lock_guard lock(store_mutex(store_id));
    PriorStore store = load_store(store_id);
    const std::string entry_id = meta.value("entry_id", std::string{});
    const bool personalize = meta.value("purpose", "") == "personalize";
    const bool overwrite = meta.value("overwrite", true);
    std::string target = entry_id.empty() ? s.id : entry_id;
    if (personalize && !overwrite) target = entry_id + "@" + s.id;

    if (auto idx = store.find(target)) {
      store.attach_optimum(target, z, store.entry(*idx).sigma);
    } else {
      RepresentativeEntry e;
      e.id = target;
      e.text = meta.value("condition_text", std::string{});
      e.embedding = meta.at("condition_embedding").get<Embedding>();
      e.z_star_star = z;
      store.add(std::move(e));
    }
    store.save(store_path(store_id));
    info["stored_entry"] = {{"store_id", store_id}, {"entry_id", target}};
  }
  s.final_info = info;
  return info;
}

Response SessionService::get_round(const std::string& id, bool include_latents) {
  return guarded([&]() -> Response {
    auto s = open_session(id);
    std::lock_guard lock(s->mu);
    if (s->state.stage == Stage::Finished)
      return error_response(409, "session_finished", "session is finished",
                            {{"z_star_star", *s->state.z_star_star},
                             {"result", "/sessions/" + s->id}});
    return {200, round_payload(*s, s->state, include_latents)};
  });
}

Response SessionService::submit_feedback(const std::string& id, const json& body) {
  return guarded([&]() -> Response {
    auto s = open_session(id);
    if (!body.is_object() || !body.contains("round"))
      fail(ErrorCode::Parse, "feedback needs {round, kind, ranking}");
    const auto round = body.at("round").get<std::size_t>();
    const RankFeedback fb = feedback_from_json(body);
    const bool latents = body.value("latents", false);

    std::lock_guard lock(s->mu);
    auto& records = s->transcript.records;

    if (round < records.size()) {
      if (!(records[round].feedback == fb))
        return error_response(409, "round_conflict",
                              "round " + std::to_string(round) +
                                  " was already answered with different feedback",
                              {{"current_round", records.size()}});
      const OptimizerState after = round + 1 == records.size()
                                       ? s->state
                                       : replay_prefix(s->transcript, round + 1);
      if (after.stage == Stage::Finished) return {200, finish_payload(*s)};
      return {200, {{"status", "next_round"}, {"round", round_payload(*s, after, latents)}}};
    }
    if (s->state.stage == Stage::Finished)
      return error_response(409, "session_finished", "session is finished",
                            {{"z_star_star", *s->state.z_star_star}});
    if (round != s->state.candidates.round_index)
      return error_response(409, "stale_round",
                            "expected round " + std::to_string(s->state.candidates.round_index),
                            {{"current_round", s->state.candidates.round_index}});

    const auto allowed = allowed_feedback(s->state.stage);
    if (std::find(allowed.begin(), allowed.end(), fb.kind) == allowed.end())
      fail(ErrorCode::Protocol, std::string(to_string(fb.kind)) + " is not accepted in " +
                                    to_string(s->state.stage));

    OptimizerState next = apply_feedback(s->state, fb);
    RoundRecord rec = make_record(s->state, fb, next, nullptr);
    {
      std::ofstream out(s->file, std::ios::binary | std::ios::app);
      if (!out) fail(ErrorCode::Io, "cannot append to " + s->file.string());
      out << to_jsonl_line(to_json(rec));
      out.flush();
      if (!out) fail(ErrorCode::Io, "cannot append to " + s->file.string());
    }
    records.push_back(std::move(rec));
    s->state = std::move(next);
    s->updated_at = std::chrono::system_clock::now();

    if (s->state.stage == Stage::Finished) return {200, finish_payload(*s)};
    return {200, {{"status", "next_round"}, {"round", round_payload(*s, s->state, latents)}}};
  });
}

Response SessionService::get_session(const std::string& id) {
  return guarded([&]() -> Response {
    auto s = open_session(id);
    std::lock_guard lock(s->mu);
    const auto& st = s->state;
    const auto& meta = s->meta();
    json body{{"id", s->id},
              {"mode", meta.value("mode", "human")},
              {"purpose", meta.value("purpose", "representative")},
              {"condition_text", meta.value("condition_text", "")},
              {"config", to_json(st.config)},
              {"stage", to_string(st.stage)},
              {"round", st.candidates.round_index},
              {"tau", st.tau},
              {"z_star", st.z_star},
              {"z_star_star", st.z_star_star ? json(*st.z_star_star) : json(nullptr)},
              {"finished", st.stage == Stage::Finished},
              {"transcript_rounds", s->transcript.records.size()},
              {"created_at", meta.value("created_at", "")},
              {"updated_at", iso_time(s->updated_at)}};
    if (meta.contains("store_id")) body["store_id"] = meta.at("store_id");
    if (meta.contains("entry_id")) body["entry_id"] = meta.at("entry_id");
    return {200, std::move(body)};
  });
}

// --- stores -----------------------------------------------------------------

Response SessionService::create_store(const json& request) {
  return guarded([&]() -> Response {
    if (!request.is_object()) fail(ErrorCode::Parse, "request body must be a JSON object");
    const std::string id = request.value("id", random_id());
    require_valid_id(id, "store");
    const std::size_t latent_dim = request.at("latent_dim").get<std::size_t>();
    const std::size_t embedding_dim = request.value("embedding_dim", options_.embedding_dim);

    PriorStore store(latent_dim, embedding_dim);
    for (const auto& e : request.value("entries", json::array())) {
      RepresentativeEntry entry;
      entry.id = e.at("id").get<std::string>();
      entry.text = e.value("text", std::string{});
      entry.embedding = e.contains("embedding") ? e.at("embedding").get<Embedding>()
                                                : toy_embed(entry.text, embedding_dim);
      if (e.contains("z_star_star")) entry.z_star_star = e.at("z_star_star").get<LatentPoint>();
      entry.sigma = e.value("sigma", kDefaultSigma);
      store.add(std::move(entry));
    }
    if (request.contains("build")) {
      const auto& b = request.at("build");
      std::vector<EmbeddingRecord> items;
      for (const auto& it : b.at("items")) {
        EmbeddingRecord r;
        r.text = it.value("text", std::string{});
        r.id = it.value("id", "item-" + std::to_string(items.size()));
        r.embedding = it.contains("embedding") ? it.at("embedding").get<Embedding>()
                                               : toy_embed(r.text, embedding_dim);
        items.push_back(std::move(r));
      }
      auto km = kmeans_representatives(items, b.value("k", kDefaultRepresentatives),
                                       b.value("iters", std::size_t{100}),
                                       b.value("seed", std::uint64_t{0}), latent_dim);
      for (auto& e : km.representatives) store.add(std::move(e));
    }

    std::lock_guard lock(store_mutex(id));
    if (std::filesystem::exists(store_path(id)))
      return error_response(409, "store_exists", "store '" + id + "' already exists");
    store.save(store_path(id));
    json body = store.to_json();
    body["id"] = id;
    return {201, std::move(body)};
  });
}

Response SessionService::list_stores() {
  return guarded([&]() -> Response {
    json ids = json::array();
    std::vector<std::string> names;
    for (const auto& f : std::filesystem::directory_iterator(options_.data_dir / "stores"))
      if (f.path().extension() == ".json") names.push_back(f.path().stem().string());
    std::sort(names.begin(), names.end());
    for (auto& n : names) ids.push_back(n);
    return {200, std::move(ids)};
  });
}

Response SessionService::get_store(const std::string& id) {
  return guarded([&]() -> Response {
    json body = load_store(id).to_json();
    body["id"] = id;
    return {200, std::move(body)};
  });
}

Response SessionService::select(const std::string& id, const json& request) {
  return guarded([&]() -> Response {
    const PriorStore store = load_store(id);
    const Embedding q = query_embedding(request, store.embedding_dim());
    const std::size_t index = store.select_prior(q);
    const auto& e = store.entry(index);
    json body{{"index", index},
              {"similarity", cosine_similarity(q, e.embedding)},
              {"entry", entry_summary(e)}};
    return {200, std::move(body)};
  });
}

Response SessionService::generate(const std::string& id, const json& request) {
  return guarded([&]() -> Response {
    const PriorStore store = load_store(id);
    if (store.empty()) fail(ErrorCode::Lookup, "store '" + id + "' has no entries");
    const Embedding q = query_embedding(request, store.embedding_dim());
    const std::size_t count = request.value("count", std::size_t{1});
    if (count == 0 || count > 100000) fail(ErrorCode::Config, "count must be in [1, 100000]");
    const std::size_t index = store.select_prior(q);
    const auto& entry = store.entry(index);
    auto rng = make_stream(request.value("seed", std::uint64_t{0}), StreamTag::Sampling, 0);
    const ToyDecoder decoder(store.latent_dim(), store.embedding_dim(), options_.decoder_seed);
    const bool trajectories = request.value("trajectories", true);

    json samples = json::array();
    for (std::size_t n = 0; n < count; ++n) {
      LatentPoint z = sample_latent(entry, rng);
      json item{{"latent", z}};
      if (trajectories) item["trajectory"] = to_json(decoder.decode(z, q));
      samples.push_back(std::move(item));
    }
    return {200, {{"entry", entry_summary(entry)}, {"samples", std::move(samples)}}};
  });
}

}  // namespace latentrank
