#include "kpigen/reward.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <stdexcept>
#include <thread>

namespace kpigen {

namespace {

constexpr double kNormTolerance = 1e-3;

double parse_double(std::string_view s, std::string_view spec) {
  try {
    std::size_t used = 0;
    const double v = std::stod(std::string(s), &used);
    if (used != s.size() || !std::isfinite(v)) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument("bad number in transform \"" + std::string(spec) + "\"");
  }
}

std::vector<std::string_view> split_colon(std::string_view s) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(':', start);
    parts.push_back(s.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

}  // namespace

ScoringText compose_scoring_text(const RewardRequest& req) {
  MediaRecord rec = req.prompt;
  rec.verbalization = req.verbalization;
  rec.kpis = req.target_kpis;
  const InstructionPair pair = render_instruction(rec, Pattern::P1, req.schema, req.target_kpis);
  ScoringText out;
  out.text = "Input: " + pair.input_text + "\n\nOutput: ";
  out.completion_begin = out.text.size();
  out.text += pair.output_text;
  out.completion_end = out.text.size();
  return out;
}

ScoreTransform ScoreTransform::parse(std::string_view spec) {
  const auto parts = split_colon(spec);
  if (parts[0] == "sum_prob" && parts.size() == 1) return sum_prob();
  if (parts[0] == "sum_logprob" && parts.size() == 1) return sum_logprob();
  if (parts[0] == "thresholded" && parts.size() == 2) return thresholded(parse_double(parts[1], spec));
  if (parts[0] == "affine" && (parts.size() == 3 || parts.size() == 4)) {
    bool on_logprob = false;
    if (parts.size() == 4) {
      if (parts[3] == "sum_logprob") {
        on_logprob = true;
      } else if (parts[3] != "sum_prob") {
        throw std::invalid_argument("affine base must be sum_prob or sum_logprob");
      }
    }
    return affine(parse_double(parts[1], spec), parse_double(parts[2], spec), on_logprob);
  }
  throw std::invalid_argument("unknown transform \"" + std::string(spec) + "\"");
}

double score(const TokenScores& scores, const ScoreTransform& transform, ScoreScope scope) {
  if (scores.tokens.size() != scores.logprobs.size()) throw std::invalid_argument("tokens and logprobs differ in length");
  if (scores.completion_offset > scores.tokens.size()) throw std::invalid_argument("completion offset past the end");
  const std::size_t begin = scope == ScoreScope::completion_only ? scores.completion_offset : 0;
  if (begin >= scores.logprobs.size()) throw std::invalid_argument("no tokens in the scored span");

  double sum_prob = 0.0;
  double sum_logprob = 0.0;
  for (std::size_t i = begin; i < scores.logprobs.size(); ++i) {
    const double lp = scores.logprobs[i];
    if (!std::isfinite(lp)) throw std::invalid_argument("non-finite log-probability at token " + std::to_string(i));
    sum_prob += std::exp(lp);
    sum_logprob += lp;
  }

  switch (transform.kind) {
    case ScoreTransform::Kind::sum_prob:
      return sum_prob;
    case ScoreTransform::Kind::sum_logprob:
      return sum_logprob;
    case ScoreTransform::Kind::thresholded:
      if (!std::isfinite(transform.cap)) throw std::invalid_argument("threshold cap must be finite");
      return std::min(sum_prob, transform.cap);
    case ScoreTransform::Kind::affine:
      if (!std::isfinite(transform.scale) || !std::isfinite(transform.offset)) {
        throw std::invalid_argument("affine parameters must be finite");
      }
      return transform.scale * (transform.affine_on_logprob ? sum_logprob : sum_prob) + transform.offset;
  }
  return sum_prob;
}

TokenScores align_response(const BackendResponse& resp, const ScoringText& text) {
  const std::size_t n = resp.tokens.size();
  if (resp.logprobs.size() != n || resp.offsets.size() != n) throw BackendError("response arrays differ in length");
  if (n == 0) throw BackendError("backend returned no tokens");
  for (std::size_t i = 0; i < n; ++i) {
    if (resp.offsets[i] >= text.text.size()) throw BackendError("token offset past the end of the text");
    if (i > 0 && resp.offsets[i] < resp.offsets[i - 1]) throw BackendError("token offsets decrease");
  }
  TokenScores out;
  out.tokens = resp.tokens;
  out.logprobs = resp.logprobs;
  // A token belongs to the completion once it ends past the completion start.
  out.completion_offset = n;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t end = i + 1 < n ? resp.offsets[i + 1] : text.text.size();
    if (end > text.completion_begin) {
      out.completion_offset = i;
      break;
    }
  }
  return out;
}

double reward_of(const RewardRequest& req, const LogitBackend& backend, const RewardOptions& options) {
  const ScoringText text = compose_scoring_text(req);
  BackendRequest breq{req.id, text.text, true};

  BackendResponse resp;
  auto backoff = options.retry.initial_backoff;
  const int attempts = std::max(1, options.retry.attempts);
  for (int attempt = 1;; ++attempt) {
    try {
      resp = backend.query(breq);
      break;
    } catch (const BackendError& e) {
      if (attempt >= attempts) {
        throw BackendError("request " + req.id + " failed after " + std::to_string(attempts) + " attempts: " + e.what());
      }
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
  }
  if (resp.id != req.id) throw BackendError("response id \"" + resp.id + "\" does not match request " + req.id);
  if (resp.normcheck && std::fabs(resp.normcheck->logsumexp) > kNormTolerance && options.warn) {
    options.warn("request " + req.id + ": log-probs not normalized at position " +
                 std::to_string(resp.normcheck->position) + " (logsumexp " + std::to_string(resp.normcheck->logsumexp) +
                 ")");
  }
  const TokenScores scores = align_response(resp, text);
  return score(scores, options.transform, options.scope);
}

std::vector<double> batch_reward(std::span<const RewardRequest> reqs, const LogitBackend& backend,
                                 const RewardOptions& options) {
  std::vector<double> out(reqs.size());
  const unsigned workers =
      std::max(1u, std::min<unsigned>(options.max_in_flight, static_cast<unsigned>(reqs.size())));
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mu;

  auto work = [&] {
    while (!failed.load()) {
      const std::size_t i = next.fetch_add(1);
      if (i >= reqs.size()) return;
      try {
        out[i] = reward_of(reqs[i], backend, options);
      } catch (...) {
        std::lock_guard lock(error_mu);
        if (!error) error = std::current_exception();
        failed = true;
      }
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);
  return out;
}

std::vector<RankedCandidate> top_k(std::span<const double> rewards, std::size_t k) {
  if (rewards.empty()) throw std::invalid_argument("best-of-n needs at least one candidate");
  if (k == 0 || k > rewards.size()) throw std::invalid_argument("k must lie in [1, n]");
  std::vector<RankedCandidate> ranked(rewards.size());
  for (std::size_t i = 0; i < rewards.size(); ++i) ranked[i] = {i, rewards[i]};
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const RankedCandidate& a, const RankedCandidate& b) { return a.reward > b.reward; });
  ranked.resize(k);
  return ranked;
}

std::vector<RankedCandidate> best_of_n(std::span<const RewardRequest> candidates, const LogitBackend& backend,
                                       std::size_t k, const RewardOptions& options) {
  if (candidates.empty()) throw std::invalid_argument("best-of-n needs at least one candidate");
  if (k == 0 || k > candidates.size()) throw std::invalid_argument("k must lie in [1, n]");
  const auto rewards = batch_reward(candidates, backend, options);
  return top_k(rewards, k);
}

}  // namespace kpigen
