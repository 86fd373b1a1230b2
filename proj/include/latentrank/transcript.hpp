// SPDX-License-Identifier: Apache-2.0
//
// Line-delimited JSON transcripts. The first line is a header carrying the
// optimizer configuration and the starting point; every following line is
// one round record {round, stage, candidates, feedback, z_star, g_bar, tau,
// z_star_star, best_f}. Replaying the feedback column through ranking-core
// from the header reproduces every candidate set bit for bit.
#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

#include "latentrank/ranking_core.hpp"

namespace latentrank {

using json = nlohmann::json;

inline constexpr int kTranscriptFormatVersion = 1;

enum class StartMode { Cold, WarmStage1, WarmStage2 };

struct TranscriptHeader {
  OptimizerConfig config;
  StartMode start = StartMode::Cold;
  std::optional<LatentPoint> start_point;  // present for warm starts
  json metadata = json::object();          // free-form (session service)
};

struct Transcript {
  TranscriptHeader header;
  RoundLog records;
};

json to_json(const OptimizerConfig& config);
// Fields missing from `j` keep their value from `base`.
OptimizerConfig config_from_json(const json& j, OptimizerConfig base = {});

json to_json(const RankFeedback& feedback);
RankFeedback feedback_from_json(const json& j);

json to_json(const RoundRecord& record);
RoundRecord record_from_json(const json& j);

json to_json(const TranscriptHeader& header);
TranscriptHeader header_from_json(const json& j);

std::string to_jsonl_line(const json& j);  // compact dump plus '\n'
std::string write_transcript(const Transcript& transcript);

// A trailing line without its newline (an interrupted append) is ignored.
Transcript parse_transcript(std::string_view jsonl);
Transcript read_transcript(const std::filesystem::path& path);
void save_transcript(const std::filesystem::path& path, const Transcript& transcript);

OptimizerState initial_state(const TranscriptHeader& header);

// Re-applies every recorded feedback. Throws Error(Replay) when a recorded
// candidate set differs from the regenerated one.
OptimizerState replay(const Transcript& transcript);

// Replays only the first `rounds` records.
OptimizerState replay_prefix(const Transcript& transcript, std::size_t rounds);

}  // namespace latentrank
