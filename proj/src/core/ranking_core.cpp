// SPDX-License-Identifier: Apache-2.0
#include "latentrank/ranking_core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "latentrank/error.hpp"
#include "latentrank/rng.hpp"

namespace latentrank {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::Config: return "config_error";
    case ErrorCode::Feedback: return "feedback_error";
    case ErrorCode::Protocol: return "protocol_error";
    case ErrorCode::Lookup: return "lookup_error";
    case ErrorCode::Domain: return "domain_error";
    case ErrorCode::Degenerate: return "degenerate_feedback";
    case ErrorCode::Io: return "io_error";
    case ErrorCode::Parse: return "parse_error";
    case ErrorCode::Replay: return "replay_error";
  }
  return "error";
}

const char* to_string(Stage stage) noexcept {
  switch (stage) {
    case Stage::Stage1: return "stage1";
    case Stage::Stage2: return "stage2";
    case Stage::Finished: return "finished";
  }
  return "?";
}

const char* to_string(FeedbackKind kind) noexcept {
  switch (kind) {
    case FeedbackKind::FullRanking: return "full_ranking";
    case FeedbackKind::BestOnly: return "best_only";
    case FeedbackKind::AcceptAndExit: return "accept_and_exit";
  }
  return "?";
}

const char* to_string(MuSchedule schedule) noexcept {
  switch (schedule) {
    case MuSchedule::Fixed: return "fixed";
    case MuSchedule::GammaDecay: return "gamma_decay";
  }
  return "?";
}

Stage stage_from_string(const std::string& name) {
  if (name == "stage1") return Stage::Stage1;
  if (name == "stage2") return Stage::Stage2;
  if (name == "finished") return Stage::Finished;
  fail(ErrorCode::Parse, "unknown stage '" + name + "'");
}

FeedbackKind feedback_kind_from_string(const std::string& name) {
  if (name == "full_ranking") return FeedbackKind::FullRanking;
  if (name == "best_only") return FeedbackKind::BestOnly;
  if (name == "accept_and_exit") return FeedbackKind::AcceptAndExit;
  fail(ErrorCode::Parse, "unknown feedback kind '" + name + "'");
}

MuSchedule mu_schedule_from_string(const std::string& name) {
  if (name == "fixed") return MuSchedule::Fixed;
  if (name == "gamma_decay") return MuSchedule::GammaDecay;
  fail(ErrorCode::Parse, "unknown mu schedule '" + name + "'");
}

void OptimizerConfig::validate() const {
  auto positive = [](double v) { return std::isfinite(v) && v > 0.0; };
  if (d == 0) fail(ErrorCode::Config, "latent dimension d must be positive");
  if (m == 0) fail(ErrorCode::Config, "query count m must be positive");
  if (k < 2 || k > m) {
    // m == 1 admits no ranking at all; k is irrelevant there.
    if (!(m == 1 && k == 1)) fail(ErrorCode::Config, "ranking depth k must satisfy 2 <= k <= m");
  }
  if (!positive(eta)) fail(ErrorCode::Config, "stepsize eta must be positive");
  if (!(std::isfinite(gamma) && gamma > 0.0 && gamma < 1.0))
    fail(ErrorCode::Config, "shrinking rate gamma must lie in (0,1)");
  if (!positive(mu1) || !positive(mu2) || !positive(mu3))
    fail(ErrorCode::Config, "smoothing parameters mu1, mu2, mu3 must be positive");
  if (max_stage1_rounds == 0 || max_stage2_rounds == 0)
    fail(ErrorCode::Config, "stage round caps must be positive");
}

RankFeedback RankFeedback::full(std::vector<std::size_t> best_to_worst) {
  return {FeedbackKind::FullRanking, std::move(best_to_worst)};
}
RankFeedback RankFeedback::best(std::size_t index) { return {FeedbackKind::BestOnly, {index}}; }
RankFeedback RankFeedback::accept(std::size_t index) {
  return {FeedbackKind::AcceptAndExit, {index}};
}

void RankFeedback::validate(std::size_t m) const {
  if (kind == FeedbackKind::FullRanking) {
    if (ranked.size() < 2 || ranked.size() > m)
      fail(ErrorCode::Feedback, "a full ranking needs between 2 and m entries");
  } else if (ranked.size() != 1) {
    fail(ErrorCode::Feedback, std::string(to_string(kind)) + " feedback needs exactly one index");
  }
  std::vector<bool> seen(m, false);
  for (std::size_t idx : ranked) {
    if (idx >= m) fail(ErrorCode::Feedback, "candidate index " + std::to_string(idx) + " out of range");
    if (seen[idx]) fail(ErrorCode::Feedback, "duplicate candidate index " + std::to_string(idx));
    seen[idx] = true;
  }
}

namespace {

void require_dim(const LatentPoint& z, std::size_t d, const char* what) {
  if (z.size() != d)
    fail(ErrorCode::Domain, std::string(what) + " has dimension " + std::to_string(z.size()) +
                                ", expected " + std::to_string(d));
  for (double v : z)
    if (!std::isfinite(v)) fail(ErrorCode::Domain, std::string(what) + " has a non-finite entry");
}

std::vector<LatentPoint> perturb_around(const LatentPoint& center, std::size_t m, double stddev,
                                        std::mt19937_64& rng) {
  std::vector<LatentPoint> points(m, center);
  LatentPoint psi(center.size());
  for (auto& p : points) {
    fill_normal(rng, stddev, psi);
    for (std::size_t c = 0; c < p.size(); ++c) p[c] += psi[c];
  }
  return points;
}

// Stage-2 candidate set for round `round` around the incumbent.
CandidateSet stage2_candidates(const OptimizerConfig& config, const LatentPoint& incumbent,
                               std::size_t round) {
  auto rng = make_stream(config.seed, StreamTag::Perturbation, round);
  CandidateSet set{perturb_around(incumbent, config.m, config.mu3, rng), round, Stage::Stage2};
  if (config.elitism) set.points.front() = incumbent;
  return set;
}

void require_stage(const OptimizerState& state, Stage expected, const char* op) {
  if (state.stage != expected)
    fail(ErrorCode::Protocol, std::string(op) + " requires " + to_string(expected) +
                                  ", session is in " + to_string(state.stage));
}

}  // namespace

OptimizerState init_session(const OptimizerConfig& config) {
  config.validate();
  OptimizerState state;
  state.config = config;
  state.stage = Stage::Stage1;
  state.z_star.assign(config.d, 0.0);
  state.g_bar.assign(config.d, 0.0);
  auto rng = make_stream(config.seed, StreamTag::Init, 0);
  state.candidates = {perturb_around(state.z_star, config.m, config.mu1, rng), 0, Stage::Stage1};
  return state;
}

OptimizerState init_session_from(const OptimizerConfig& config, const LatentPoint& start,
                                  bool enter_stage2) {
  config.validate();
  require_dim(start, config.d, "warm start");
  OptimizerState state;
  state.config = config;
  state.g_bar.assign(config.d, 0.0);
  if (enter_stage2) {
    state.stage = Stage::Stage2;
    state.z_star.assign(config.d, 0.0);
    state.z_star_star = start;
    state.candidates = stage2_candidates(config, start, 0);
  } else {
    state.stage = Stage::Stage1;
    state.z_star = start;
    auto rng = make_stream(config.seed, StreamTag::Init, 0);
    state.candidates = {perturb_around(start, config.m, config.mu1, rng), 0, Stage::Stage1};
  }
  return state;
}

ComparisonDag build_comparison_dag(std::size_t m, const RankFeedback& feedback) {
  if (feedback.kind == FeedbackKind::AcceptAndExit)
    fail(ErrorCode::Feedback, "accept_and_exit carries no comparison information");
  // BestOnly with m == 1 is legal input and simply has no edges.
  if (feedback.kind == FeedbackKind::BestOnly) {
    if (feedback.ranked.size() != 1) fail(ErrorCode::Feedback, "best_only needs exactly one index");
    if (feedback.ranked[0] >= m) fail(ErrorCode::Feedback, "candidate index out of range");
  } else {
    feedback.validate(m);
  }

  std::vector<bool> ranked(m, false);
  for (std::size_t idx : feedback.ranked) ranked[idx] = true;

  ComparisonDag dag{m, {}};
  const auto& order = feedback.ranked;
  const std::size_t k = order.size();
  dag.edges.reserve(k * (k - 1) / 2 + k * (m - k));
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t b = a + 1; b < k; ++b) dag.edges.emplace_back(order[a], order[b]);
    for (std::size_t j = 0; j < m; ++j)
      if (!ranked[j]) dag.edges.emplace_back(order[a], j);
  }
  return dag;
}

std::vector<double> estimate_gradient(const CandidateSet& candidates, const ComparisonDag& dag,
                                      double mu) {
  if (!(mu > 0.0) || !std::isfinite(mu)) fail(ErrorCode::Domain, "smoothing mu must be positive");
  if (dag.edges.empty()) fail(ErrorCode::Degenerate, "comparison graph has no edges");
  if (candidates.points.empty()) fail(ErrorCode::Domain, "empty candidate set");
  const std::size_t d = candidates.points.front().size();
  std::vector<double> g(d, 0.0);
  for (auto [i, j] : dag.edges) {
    if (i >= candidates.points.size() || j >= candidates.points.size())
      fail(ErrorCode::Feedback, "edge refers to a missing candidate");
    const auto& xi = candidates.points[i];
    const auto& xj = candidates.points[j];
    for (std::size_t c = 0; c < d; ++c) g[c] += xj[c] - xi[c];
  }
  const double scale = 1.0 / (static_cast<double>(dag.edges.size()) * mu);
  for (double& v : g) v *= scale;
  return g;
}

std::vector<double> reference_weights(std::size_t m, const RankFeedback& feedback) {
  const std::size_t k = feedback.ranked.size();
  std::vector<double> score(m, 0.0);
  for (std::size_t r = 0; r < k; ++r) score[feedback.ranked[r]] = static_cast<double>(k - r);
  const double top = *std::max_element(score.begin(), score.end());
  std::vector<double> w(m);
  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i) total += (w[i] = std::exp(score[i] - top));
  for (double& v : w) v /= total;
  return w;
}

namespace {

LatentPoint combine(const std::vector<LatentPoint>& points, const std::vector<double>& w) {
  LatentPoint z(points.front().size(), 0.0);
  for (std::size_t i = 0; i < points.size(); ++i)
    for (std::size_t c = 0; c < z.size(); ++c) z[c] += w[i] * points[i][c];
  return z;
}

}  // namespace

LatentPoint weighted_reference(const CandidateSet& candidates, const RankFeedback& feedback) {
  const std::size_t m = candidates.points.size();
  if (m == 0) fail(ErrorCode::Domain, "empty candidate set");
  if (m == 1) return candidates.points.front();
  if (feedback.kind != FeedbackKind::FullRanking)
    fail(ErrorCode::Feedback, "weighted reference needs a full ranking");
  feedback.validate(m);
  if (feedback.ranked.size() != m)
    fail(ErrorCode::Feedback, "weighted reference needs a total order over all candidates");
  return combine(candidates.points, reference_weights(m, feedback));
}

double gradient_mu(const OptimizerConfig& config, std::size_t tau) {
  if (tau == 0) return config.mu1;
  if (config.mu_schedule == MuSchedule::GammaDecay)
    return config.mu2 * std::pow(config.gamma, static_cast<double>(tau - 1));
  return config.mu2;
}

OptimizerState stage1_step(const OptimizerState& state, const RankFeedback& feedback) {
  require_stage(state, Stage::Stage1, "stage1_step");
  if (feedback.kind != FeedbackKind::FullRanking)
    fail(ErrorCode::Protocol, "stage1_step requires full_ranking feedback");
  const auto& cfg = state.config;
  feedback.validate(cfg.m);

  if (state.tau + 1 > cfg.max_stage1_rounds)
    return transition_to_stage2(state, RankFeedback::best(feedback.ranked.front()));

  OptimizerState next = state;
  const auto& points = state.candidates.points;
  next.z_star = combine(points, reference_weights(cfg.m, feedback));

  const auto g = estimate_gradient(state.candidates, build_comparison_dag(cfg.m, feedback),
                                   gradient_mu(cfg, state.tau));
  const double t = static_cast<double>(state.tau);
  for (std::size_t c = 0; c < cfg.d; ++c) next.g_bar[c] = (t * state.g_bar[c] + g[c]) / (t + 1.0);
  next.tau = state.tau + 1;

  const std::size_t round = state.candidates.round_index + 1;
  auto rng = make_stream(cfg.seed, StreamTag::Perturbation, round);
  std::vector<LatentPoint> fan(cfg.m, LatentPoint(cfg.d));
  LatentPoint psi(cfg.d);
  double step = cfg.eta;
  for (auto& x : fan) {
    fill_normal(rng, cfg.mu2, psi);
    for (std::size_t c = 0; c < cfg.d; ++c) x[c] = next.z_star[c] - step * next.g_bar[c] + psi[c];
    step *= cfg.gamma;
  }
  next.candidates = {std::move(fan), round, Stage::Stage1};
  return next;
}

OptimizerState transition_to_stage2(const OptimizerState& state, const RankFeedback& feedback) {
  require_stage(state, Stage::Stage1, "transition_to_stage2");
  if (feedback.kind != FeedbackKind::BestOnly)
    fail(ErrorCode::Protocol, "the stage transition requires best_only feedback");
  feedback.validate(state.config.m);

  OptimizerState next = state;
  next.stage = Stage::Stage2;
  next.z_star_star = state.candidates.points[feedback.ranked.front()];
  next.candidates =
      stage2_candidates(state.config, *next.z_star_star, state.candidates.round_index + 1);
  return next;
}

OptimizerState stage2_step(const OptimizerState& state, const RankFeedback& feedback) {
  require_stage(state, Stage::Stage2, "stage2_step");
  if (feedback.kind == FeedbackKind::FullRanking)
    fail(ErrorCode::Protocol, "stage 2 accepts best_only or accept_and_exit feedback only");
  feedback.validate(state.config.m);

  OptimizerState next = state;
  next.z_star_star = state.candidates.points[feedback.ranked.front()];
  if (feedback.kind == FeedbackKind::AcceptAndExit) {
    next.stage = Stage::Finished;
    return next;
  }
  next.stage2_rounds = state.stage2_rounds + 1;
  if (next.stage2_rounds >= state.config.max_stage2_rounds) {
    next.stage = Stage::Finished;
    return next;
  }
  next.candidates =
      stage2_candidates(state.config, *next.z_star_star, state.candidates.round_index + 1);
  return next;
}

OptimizerState apply_feedback(const OptimizerState& state, const RankFeedback& feedback) {
  switch (state.stage) {
    case Stage::Stage1:
      if (feedback.kind == FeedbackKind::FullRanking) return stage1_step(state, feedback);
      if (feedback.kind == FeedbackKind::BestOnly) return transition_to_stage2(state, feedback);
      break;
    case Stage::Stage2:
      return stage2_step(state, feedback);
    case Stage::Finished:
      break;
  }
  fail(ErrorCode::Protocol, std::string(to_string(feedback.kind)) + " is not accepted in " +
                                to_string(state.stage));
}

std::vector<FeedbackKind> allowed_feedback(Stage stage) {
  switch (stage) {
    case Stage::Stage1: return {FeedbackKind::FullRanking, FeedbackKind::BestOnly};
    case Stage::Stage2: return {FeedbackKind::BestOnly, FeedbackKind::AcceptAndExit};
    case Stage::Finished: return {};
  }
  return {};
}

RoundRecord make_record(const OptimizerState& before, const RankFeedback& feedback,
                        const OptimizerState& after, const RankingOracle* oracle) {
  RoundRecord rec;
  rec.round = before.candidates.round_index;
  rec.stage = before.stage;
  rec.candidates = before.candidates.points;
  rec.feedback = feedback;
  rec.z_star = after.z_star;
  rec.g_bar = after.g_bar;
  rec.tau = after.tau;
  rec.z_star_star = after.z_star_star;
  if (oracle != nullptr) {
    double best = std::numeric_limits<double>::infinity();
    bool exposed = true;
    for (const auto& p : rec.candidates) {
      auto f = oracle->objective(p);
      if (!f) {
        exposed = false;
        break;
      }
      best = std::min(best, *f);
    }
    if (exposed) rec.best_f = best;
  }
  return rec;
}

ScriptedRun run_scripted(const OptimizerConfig& config, RankingOracle& oracle,
                         const StopRule& stop) {
  OptimizerConfig cfg = config;
  cfg.max_stage1_rounds = std::max<std::size_t>(1, stop.stage1_rounds);
  cfg.max_stage2_rounds = std::max<std::size_t>(1, stop.stage2_rounds);
  return run_scripted_from(init_session(cfg), oracle, stop);
}

ScriptedRun run_scripted_from(OptimizerState state, RankingOracle& oracle, const StopRule& stop) {
  ScriptedRun run;
  auto step = [&](const RankFeedback& fb) {
    OptimizerState next = apply_feedback(state, fb);
    run.log.push_back(make_record(state, fb, next, &oracle));
    state = std::move(next);
  };

  if (state.stage == Stage::Stage1) {
    const std::size_t depth = std::max<std::size_t>(2, std::min(state.config.k, state.config.m));
    for (std::size_t r = 0; r < stop.stage1_rounds && state.config.m >= 2; ++r)
      step(oracle.rank(state.candidates, depth));
    step(oracle.rank(state.candidates, 1));
  }
  for (std::size_t r = 0; r < stop.stage2_rounds && state.stage == Stage::Stage2; ++r)
    step(oracle.rank(state.candidates, 1));

  run.result = *state.z_star_star;
  run.final_state = std::move(state);
  return run;
}

}  // namespace latentrank
