#pragma once

// Reward from a language model's token log-probabilities.
//
// A candidate image, already verbalized, is scored by composing a pattern-1
// prompt that asks for high-KPI content (the generation prompt plus target
// KPI values) followed by the candidate's verbalization as the completion,
// asking a logit backend for per-token log-probabilities, and reducing the
// completion tokens to a scalar. The default reduction sums token
// probabilities.

#include <chrono>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kpigen/backend.hpp"
#include "kpigen/dataset.hpp"
#include "kpigen/verbalization.hpp"

namespace kpigen {

struct RewardRequest {
  std::string id;
  // Prompt side: caption, keywords/account, resolution and timestamp are
  // used; KPIs and verbalization are ignored.
  MediaRecord prompt;
  Schema schema = Schema::stock;
  // KPI values placed in the prompt. Typically the high bucket's means.
  KpiMap target_kpis;
  Verbalization verbalization;
};

struct ScoringText {
  std::string text;
  std::size_t completion_begin = 0;  // byte offsets of the completion in text
  std::size_t completion_end = 0;
};

// "Input: <pattern-1 prompt>\n\nOutput: <verbalization>"; the completion span
// covers the verbalization.
ScoringText compose_scoring_text(const RewardRequest& req);

struct TokenScores {
  std::vector<std::string> tokens;
  std::vector<double> logprobs;
  std::size_t completion_offset = 0;  // first token of the scored span
};

struct ScoreTransform {
  enum class Kind { sum_prob, sum_logprob, thresholded, affine };

  Kind kind = Kind::sum_prob;
  double cap = 0.0;          // thresholded: min(sum_prob, cap)
  double scale = 1.0;        // affine: scale * base + offset
  double offset = 0.0;
  bool affine_on_logprob = false;

  static ScoreTransform sum_prob() { return {}; }
  static ScoreTransform sum_logprob() { return {Kind::sum_logprob}; }
  static ScoreTransform thresholded(double cap) { return {Kind::thresholded, cap}; }
  static ScoreTransform affine(double scale, double offset, bool on_logprob = false) {
    return {Kind::affine, 0.0, scale, offset, on_logprob};
  }

  // "sum_prob", "sum_logprob", "thresholded:<cap>", "affine:<a>:<b>[:sum_logprob]".
  static ScoreTransform parse(std::string_view spec);
};

enum class ScoreScope { completion_only, full_text };

// Throws std::invalid_argument for an empty scope, non-finite log-probs,
// misaligned arrays or a non-finite transform parameter.
double score(const TokenScores& scores, const ScoreTransform& transform,
             ScoreScope scope = ScoreScope::completion_only);

struct RetryPolicy {
  int attempts = 3;
  std::chrono::milliseconds initial_backoff{50};
};

struct RewardOptions {
  ScoreTransform transform;
  ScoreScope scope = ScoreScope::completion_only;
  RetryPolicy retry;
  unsigned max_in_flight = 4;
  // Receives non-fatal diagnostics (e.g. a failed normalization check).
  std::function<void(const std::string&)> warn;
};

// Maps a backend response onto TokenScores for `text`, locating the first
// token that ends inside the completion. Throws BackendError when the
// response does not line up with the text.
TokenScores align_response(const BackendResponse& resp, const ScoringText& text);

double reward_of(const RewardRequest& req, const LogitBackend& backend, const RewardOptions& options = {});

// Rewards in input order. Any request that still fails after its retries
// fails the whole batch; no partial results are returned.
std::vector<double> batch_reward(std::span<const RewardRequest> reqs, const LogitBackend& backend,
                                 const RewardOptions& options = {});

struct RankedCandidate {
  std::size_t index = 0;
  double reward = 0.0;
};

// The k highest-reward candidates, best first; equal rewards keep the lower
// index first. Throws std::invalid_argument unless 1 <= k <= n.
std::vector<RankedCandidate> best_of_n(std::span<const RewardRequest> candidates, const LogitBackend& backend,
                                       std::size_t k, const RewardOptions& options = {});

// Ranking step of best_of_n on precomputed rewards.
std::vector<RankedCandidate> top_k(std::span<const double> rewards, std::size_t k);

}  // namespace kpigen
