// SPDX-License-Identifier: Apache-2.0
#include "latentrank/transcript.hpp"

#include <fstream>
#include <sstream>

#include "latentrank/error.hpp"

namespace latentrank {

json to_json(const OptimizerConfig& c) {
  return json{{"d", c.d},
              {"m", c.m},
              {"k", c.k},
              {"eta", c.eta},
              {"gamma", c.gamma},
              {"mu1", c.mu1},
              {"mu2", c.mu2},
              {"mu3", c.mu3},
              {"max_stage1_rounds", c.max_stage1_rounds},
              {"max_stage2_rounds", c.max_stage2_rounds},
              {"elitism", c.elitism},
              {"seed", c.seed},
              {"mu_schedule", to_string(c.mu_schedule)}};
}

OptimizerConfig config_from_json(const json& j, OptimizerConfig base) {
  if (!j.is_object()) fail(ErrorCode::Parse, "optimizer config must be a JSON object");
  try {
    auto take = [&](const char* key, auto& field) {
      if (auto it = j.find(key); it != j.end() && !it->is_null())
        field = it->get<std::remove_reference_t<decltype(field)>>();
    };
    const bool k_given = j.contains("k");
    take("d", base.d);
    take("m", base.m);
    take("k", base.k);
    take("eta", base.eta);
    take("gamma", base.gamma);
    take("mu1", base.mu1);
    take("mu2", base.mu2);
    take("mu3", base.mu3);
    take("max_stage1_rounds", base.max_stage1_rounds);
    take("max_stage2_rounds", base.max_stage2_rounds);
    take("elitism", base.elitism);
    take("seed", base.seed);
    if (j.contains("mu_schedule"))
      base.mu_schedule = mu_schedule_from_string(j.at("mu_schedule").get<std::string>());
    // k defaults to m: a full ranking unless asked otherwise.
    if (!k_given) base.k = base.m;
  } catch (const json::exception& e) {
    fail(ErrorCode::Parse, std::string("bad optimizer config: ") + e.what());
  }
  return base;
}

json to_json(const RankFeedback& f) {
  return json{{"kind", to_string(f.kind)}, {"ranking", f.ranked}};
}

RankFeedback feedback_from_json(const json& j) {
  try {
    RankFeedback f;
    f.kind = feedback_kind_from_string(j.at("kind").get<std::string>());
    for (const auto& v : j.at("ranking")) {
      if (!v.is_number_integer() || v.get<long long>() < 0)
        fail(ErrorCode::Feedback, "ranking entries must be non-negative integers");
      f.ranked.push_back(v.get<std::size_t>());
    }
    return f;
  } catch (const json::exception& e) {
    fail(ErrorCode::Parse, std::string("bad feedback: ") + e.what());
  }
}

json to_json(const RoundRecord& r) {
  json j{{"round", r.round},           {"stage", to_string(r.stage)},
         {"candidates", r.candidates}, {"feedback", to_json(r.feedback)},
         {"z_star", r.z_star},         {"g_bar", r.g_bar},
         {"tau", r.tau}};
  j["z_star_star"] = r.z_star_star ? json(*r.z_star_star) : json(nullptr);
  if (r.best_f) j["best_f"] = *r.best_f;
  return j;
}

RoundRecord record_from_json(const json& j) {
  try {
    RoundRecord r;
    r.round = j.at("round").get<std::size_t>();
    r.stage = stage_from_string(j.at("stage").get<std::string>());
    r.candidates = j.at("candidates").get<std::vector<LatentPoint>>();
    r.feedback = feedback_from_json(j.at("feedback"));
    r.z_star = j.at("z_star").get<LatentPoint>();
    r.g_bar = j.at("g_bar").get<std::vector<double>>();
    r.tau = j.at("tau").get<std::size_t>();
    if (auto it = j.find("z_star_star"); it != j.end() && !it->is_null())
      r.z_star_star = it->get<LatentPoint>();
    if (auto it = j.find("best_f"); it != j.end() && !it->is_null()) r.best_f = it->get<double>();
    return r;
  } catch (const json::exception& e) {
    fail(ErrorCode::Parse, std::string("bad round record: ") + e.what());
  }
}

namespace {

const char* start_name(StartMode s) {
  switch (s) {
    case StartMode::Cold: return "cold";
    case StartMode::WarmStage1: return "warm_stage1";
    case StartMode::WarmStage2: return "warm_stage2";
  }
  return "cold";
}

StartMode start_from_name(const std::string& s) {
  if (s == "cold") return StartMode::Cold;
  if (s == "warm_stage1") return StartMode::WarmStage1;
  if (s == "warm_stage2") return StartMode::WarmStage2;
  fail(ErrorCode::Parse, "unknown start mode '" + s + "'");
}

}  // namespace

json to_json(const TranscriptHeader& h) {
  json start{{"mode", start_name(h.start)}};
  if (h.start_point) start["point"] = *h.start_point;
  json j{{"format_version", kTranscriptFormatVersion}, {"config", to_json(h.config)},
         {"start", start}};
  if (!h.metadata.empty()) j["metadata"] = h.metadata;
  return j;
}

TranscriptHeader header_from_json(const json& j) {
  try {
    const int version = j.at("format_version").get<int>();
    if (version != kTranscriptFormatVersion)
      fail(ErrorCode::Parse, "unsupported transcript format_version " + std::to_string(version));
    TranscriptHeader h;
    h.config = config_from_json(j.at("config"));
    const auto& start = j.at("start");
    h.start = start_from_name(start.at("mode").get<std::string>());
    if (start.contains("point")) h.start_point = start.at("point").get<LatentPoint>();
    if (h.start != StartMode::Cold && !h.start_point)
      fail(ErrorCode::Parse, "warm-start transcript without a start point");
    if (j.contains("metadata")) h.metadata = j.at("metadata");
    return h;
  } catch (const json::exception& e) {
    fail(ErrorCode::Parse, std::string("bad transcript header: ") + e.what());
  }
}

std::string to_jsonl_line(const json& j) { return j.dump() + '\n'; }

std::string write_transcript(const Transcript& t) {
  std::string out = to_jsonl_line(to_json(t.header));
  for (const auto& r : t.records) out += to_jsonl_line(to_json(r));
  return out;
}

Transcript parse_transcript(std::string_view text) {
  Transcript t;
  bool have_header = false;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) break;  // incomplete trailing line
    const std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      fail(ErrorCode::Parse, std::string("transcript line is not JSON: ") + e.what());
    }
    if (!have_header) {
      t.header = header_from_json(j);
      have_header = true;
    } else {
      t.records.push_back(record_from_json(j));
    }
  }
  if (!have_header) fail(ErrorCode::Parse, "transcript has no header line");
  return t;
}

Transcript read_transcript(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open transcript " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_transcript(buf.str());
}

void save_transcript(const std::filesystem::path& path, const Transcript& transcript) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::Io, "cannot write transcript " + path.string());
  out << write_transcript(transcript);
  if (!out) fail(ErrorCode::Io, "failed writing transcript " + path.string());
}

OptimizerState initial_state(const TranscriptHeader& h) {
  switch (h.start) {
    case StartMode::Cold: return init_session(h.config);
    case StartMode::WarmStage1: return init_session_from(h.config, *h.start_point, false);
    case StartMode::WarmStage2: return init_session_from(h.config, *h.start_point, true);
  }
  return init_session(h.config);
}

OptimizerState replay_prefix(const Transcript& t, std::size_t rounds) {
  OptimizerState state = initial_state(t.header);
  const std::size_t n = std::min(rounds, t.records.size());
  for (std::size_t i = 0; i < n; ++i) {
    const auto& rec = t.records[i];
    if (rec.round != state.candidates.round_index || rec.candidates != state.candidates.points)
      fail(ErrorCode::Replay, "record " + std::to_string(i) +
                                  " does not match the regenerated candidate set");
    state = apply_feedback(state, rec.feedback);
  }
  return state;
}

OptimizerState replay(const Transcript& t) { return replay_prefix(t, t.records.size()); }

}  // namespace latentrank
