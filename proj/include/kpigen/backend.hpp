#pragma once

// Logit backend protocol.
//
//   request  {"id": str, "text": str, "echo_tokens": true}
//   response {"id": str, "tokens": [str], "logprobs": [float], "offsets": [int]}
//
// logprobs[i] is the natural-log probability of tokens[i] given the text
// before offsets[i] (character offset into the request text). A response may
// carry an optional "normcheck": {"position": int, "logsumexp": float}
// reporting the log-sum-exp of the full vocabulary distribution at one
// position; clients use it to confirm the log-probs are normalized.

#include <chrono>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace kpigen {

class BackendError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct BackendRequest {
  std::string id;
  std::string text;
  bool echo_tokens = true;
};

struct NormCheck {
  std::size_t position = 0;
  double logsumexp = 0.0;
};

struct BackendResponse {
  std::string id;
  std::vector<std::string> tokens;
  std::vector<double> logprobs;
  std::vector<std::size_t> offsets;
  std::optional<NormCheck> normcheck;
};

std::string encode_request(const BackendRequest& req);
BackendRequest decode_request(std::string_view json);
std::string encode_response(const BackendResponse& resp);
// Throws BackendError on malformed payloads or mismatched array lengths.
BackendResponse decode_response(std::string_view json);

class LogitBackend {
 public:
  virtual ~LogitBackend() = default;
  // Must be safe to call from several threads at once.
  virtual BackendResponse query(const BackendRequest& req) const = 0;
};

// In-process deterministic backend. Text is split into tokens at whitespace
// boundaries, each token carrying its leading whitespace; the probability of
// every token comes from `rule(token, index)`.
class MockBackend : public LogitBackend {
 public:
  using Rule = std::function<double(std::string_view token, std::size_t index)>;

  explicit MockBackend(Rule rule);

  // Every token has probability p.
  static MockBackend fixed(double p);
  // Probability p_long for tokens (without leading whitespace) of at least
  // `min_length` characters, p_short otherwise.
  static MockBackend length_keyed(std::size_t min_length, double p_long, double p_short);
  // Probability p_hit for tokens containing `keyword`, p_miss otherwise.
  static MockBackend keyword(std::string keyword, double p_hit, double p_miss);

  BackendResponse query(const BackendRequest& req) const override;

  // Tokenization used by the mock; exposed for tests.
  static void tokenize(std::string_view text, std::vector<std::string>& tokens, std::vector<std::size_t>& offsets);

 private:
  Rule rule_;
};

// Always fails; stands in for an unreachable server.
class FailingBackend : public LogitBackend {
 public:
  BackendResponse query(const BackendRequest&) const override { throw BackendError("backend unreachable"); }
};

// HTTP transport: POSTs the request JSON to `url`. A URL without a path
// posts to /score.
class HttpBackend : public LogitBackend {
 public:
  explicit HttpBackend(std::string url, std::chrono::milliseconds timeout = std::chrono::seconds(30));
  BackendResponse query(const BackendRequest& req) const override;

 private:
  std::string origin_;
  std::string path_;
  std::chrono::milliseconds timeout_;
};

}  // namespace kpigen
