// SPDX-License-Identifier: Apache-2.0
//
// Two-stage latent search driven by an (m,k)-ranking oracle.
//
// Stage 1 keeps a reference point z*, a running mean of rank-based gradient
// estimates (the gradient memory) and proposes a fan of m candidates along the
// memory direction with geometrically shrinking steps. Stage 2 refines the
// incumbent z** with small isotropic perturbations and best-of-m selection.
//
// All operations are pure: they take a state by const reference and return a
// new one. Randomness for round r comes from the stream
// (config.seed, Perturbation, r), so a state plus its feedback fully
// determines the next state.
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace latentrank {

using LatentPoint = std::vector<double>;

enum class Stage { Stage1, Stage2, Finished };
enum class FeedbackKind { FullRanking, BestOnly, AcceptAndExit };

// Smoothing used by the gradient estimate after round 0.
enum class MuSchedule {
  Fixed,       // mu2 for every round after the first
  GammaDecay,  // mu2 * gamma^(tau-1)
};

const char* to_string(Stage stage) noexcept;
const char* to_string(FeedbackKind kind) noexcept;
const char* to_string(MuSchedule schedule) noexcept;
Stage stage_from_string(const std::string& name);
FeedbackKind feedback_kind_from_string(const std::string& name);
MuSchedule mu_schedule_from_string(const std::string& name);

struct OptimizerConfig {
  std::size_t d = 256;  // latent dimension
  std::size_t m = 4;    // candidates per round
  std::size_t k = 4;    // ranking depth requested in stage 1
  double eta = 1.0;
  double gamma = 0.5;  // shrinking rate, open interval (0,1)
  double mu1 = 0.8;    // std of round-0 candidates
  double mu2 = 0.4;    // std of stage-1 perturbations
  double mu3 = 0.1;    // std of stage-2 perturbations
  std::size_t max_stage1_rounds = 10;
  std::size_t max_stage2_rounds = 5;
  bool elitism = true;  // stage-2 candidate 0 is the incumbent itself
  std::uint64_t seed = 0;
  MuSchedule mu_schedule = MuSchedule::Fixed;

  // Throws Error(Config) on violation.
  void validate() const;

  bool operator==(const OptimizerConfig&) const = default;
};

struct RankFeedback {
  FeedbackKind kind = FeedbackKind::FullRanking;
  std::vector<std::size_t> ranked;  // candidate indices, best first

  static RankFeedback full(std::vector<std::size_t> best_to_worst);
  static RankFeedback best(std::size_t index);
  static RankFeedback accept(std::size_t index);

  // Distinct, in range, and of a length legal for the kind.
  void validate(std::size_t m) const;

  bool operator==(const RankFeedback&) const = default;
};

struct CandidateSet {
  std::vector<LatentPoint> points;
  std::size_t round_index = 0;
  Stage stage = Stage::Stage1;

  bool operator==(const CandidateSet&) const = default;
};

// Edge (i, j): candidate i was judged better (lower score) than candidate j.
struct ComparisonDag {
  std::size_t node_count = 0;
  std::vector<std::pair<std::size_t, std::size_t>> edges;
};

struct OptimizerState {
  OptimizerConfig config;
  Stage stage = Stage::Stage1;
  LatentPoint z_star;
  std::vector<double> g_bar;
  std::size_t tau = 0;  // completed stage-1 gradient updates
  std::optional<LatentPoint> z_star_star;
  CandidateSet candidates;
  std::size_t stage2_rounds = 0;  // completed stage-2 best-only selections

  bool operator==(const OptimizerState&) const = default;
};

// --- Algorithm steps ------------------------------------------------------

OptimizerState init_session(const OptimizerConfig& config);

// Start from an existing optimum instead of the origin.
//  - enter_stage2 = true: z** = start, candidates = start + N(0, mu3).
//  - enter_stage2 = false: z* = start, candidates = start + N(0, mu1).
OptimizerState init_session_from(const OptimizerConfig& config, const LatentPoint& start,
                                 bool enter_stage2);

ComparisonDag build_comparison_dag(std::size_t m, const RankFeedback& feedback);

// Mean over edges of (x_j - x_i) / mu. Points toward increasing score.
std::vector<double> estimate_gradient(const CandidateSet& candidates,
                                      const ComparisonDag& dag, double mu);

// Softmax-weighted combination of a totally ordered candidate set.
// The r-th best candidate (1-based) has score k + 1 - r.
LatentPoint weighted_reference(const CandidateSet& candidates, const RankFeedback& feedback);

// Softmax weights aligned with candidate storage order. Candidates missing
// from a partial ranking all get score 0.
std::vector<double> reference_weights(std::size_t m, const RankFeedback& feedback);

OptimizerState stage1_step(const OptimizerState& state, const RankFeedback& feedback);
OptimizerState transition_to_stage2(const OptimizerState& state, const RankFeedback& feedback);
OptimizerState stage2_step(const OptimizerState& state, const RankFeedback& feedback);

// Dispatches on (stage, feedback.kind):
//   Stage1 + FullRanking  -> stage1_step
//   Stage1 + BestOnly     -> transition_to_stage2
//   Stage2 + BestOnly / AcceptAndExit -> stage2_step
// Anything else is a protocol error.
OptimizerState apply_feedback(const OptimizerState& state, const RankFeedback& feedback);

// Feedback kinds accepted by apply_feedback in the given stage.
std::vector<FeedbackKind> allowed_feedback(Stage stage);

// Smoothing parameter used for the gradient estimate at memory count tau.
double gradient_mu(const OptimizerConfig& config, std::size_t tau);

// --- Scripted driver -------------------------------------------------------

class RankingOracle {
 public:
  virtual ~RankingOracle() = default;

  // Returns the `depth` best candidates, best first. depth == 1 yields
  // BestOnly feedback, depth >= 2 FullRanking.
  virtual RankFeedback rank(const CandidateSet& candidates, std::size_t depth) = 0;

  // Noiseless objective value, when the oracle can expose one.
  virtual std::optional<double> objective(std::span<const double> /*z*/) const {
    return std::nullopt;
  }
};

struct RoundRecord {
  std::size_t round = 0;
  Stage stage = Stage::Stage1;  // stage in which the candidates were shown
  std::vector<LatentPoint> candidates;
  RankFeedback feedback;
  // State after the feedback was applied.
  LatentPoint z_star;
  std::vector<double> g_bar;
  std::size_t tau = 0;
  std::optional<LatentPoint> z_star_star;
  std::optional<double> best_f;  // min objective over `candidates`

  bool operator==(const RoundRecord&) const = default;
};

using RoundLog = std::vector<RoundRecord>;

struct StopRule {
  std::size_t stage1_rounds = 10;
  std::size_t stage2_rounds = 5;
};

struct ScriptedRun {
  OptimizerState final_state;
  LatentPoint result;  // z**
  RoundLog log;
};

// Runs `stage1_rounds` full-ranking rounds, one best-only transition, then
// `stage2_rounds` best-only refinements (the last one finishes the session).
// With zero stage-2 rounds the session stops in Stage2 right after the
// transition and the result is the best of the last stage-1 candidate set.
ScriptedRun run_scripted(const OptimizerConfig& config, RankingOracle& oracle,
                         const StopRule& stop);

// Same loop, starting from an already initialized state.
ScriptedRun run_scripted_from(OptimizerState state, RankingOracle& oracle,
                              const StopRule& stop);

RoundRecord make_record(const OptimizerState& before, const RankFeedback& feedback,
                        const OptimizerState& after, const RankingOracle* oracle);

}  // namespace latentrank
