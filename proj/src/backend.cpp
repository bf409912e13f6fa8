#include "kpigen/backend.hpp"

#include <httplib.h>
#include <json.hpp>

#include <cctype>
#include <cmath>

namespace kpigen {

std::string encode_request(const BackendRequest& req) {
  nlohmann::ordered_json j;
  j["id"] = req.id;
  j["text"] = req.text;
  j["echo_tokens"] = req.echo_tokens;
  return j.dump();
}

BackendRequest decode_request(std::string_view json) {
  try {
    const auto j = nlohmann::json::parse(json);
    BackendRequest r;
    r.id = j.at("id").get<std::string>();
    r.text = j.at("text").get<std::string>();
    r.echo_tokens = j.value("echo_tokens", true);
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw BackendError(std::string("malformed backend request: ") + e.what());
  }
}

std::string encode_response(const BackendResponse& resp) {
  nlohmann::ordered_json j;
  j["id"] = resp.id;
  j["tokens"] = resp.tokens;
  j["logprobs"] = resp.logprobs;
  j["offsets"] = resp.offsets;
  if (resp.normcheck) j["normcheck"] = {{"position", resp.normcheck->position}, {"logsumexp", resp.normcheck->logsumexp}};
  return j.dump();
}

BackendResponse decode_response(std::string_view json) {
  BackendResponse r;
  try {
    const auto j = nlohmann::json::parse(json);
    if (j.contains("error")) throw BackendError("backend error: " + j.at("error").dump());
    r.id = j.at("id").get<std::string>();
    r.tokens = j.at("tokens").get<std::vector<std::string>>();
    r.logprobs = j.at("logprobs").get<std::vector<double>>();
    r.offsets = j.at("offsets").get<std::vector<std::size_t>>();
    if (j.contains("normcheck")) {
      const auto& n = j.at("normcheck");
      r.normcheck = NormCheck{n.at("position").get<std::size_t>(), n.at("logsumexp").get<double>()};
    }
  } catch (const nlohmann::json::exception& e) {
    throw BackendError(std::string("malformed backend response: ") + e.what());
  }
  if (r.tokens.size() != r.logprobs.size() || r.tokens.size() != r.offsets.size()) {
    throw BackendError("backend response arrays differ in length");
  }
  return r;
}

// ---------------------------------------------------------------------------

MockBackend::MockBackend(Rule rule) : rule_(std::move(rule)) {}

MockBackend MockBackend::fixed(double p) {
  return MockBackend([p](std::string_view, std::size_t) { return p; });
}

MockBackend MockBackend::length_keyed(std::size_t min_length, double p_long, double p_short) {
  return MockBackend([=](std::string_view tok, std::size_t) {
    std::size_t n = 0;
    for (char c : tok) n += std::isspace(static_cast<unsigned char>(c)) ? 0 : 1;
    return n >= min_length ? p_long : p_short;
  });
}

MockBackend MockBackend::keyword(std::string keyword, double p_hit, double p_miss) {
  return MockBackend([kw = std::move(keyword), p_hit, p_miss](std::string_view tok, std::size_t) {
    return tok.find(kw) != std::string_view::npos ? p_hit : p_miss;
  });
}

void MockBackend::tokenize(std::string_view text, std::vector<std::string>& tokens, std::vector<std::size_t>& offsets) {
  tokens.clear();
  offsets.clear();
  std::size_t i = 0;
  while (i < text.size()) {
    const std::size_t start = i;
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    tokens.emplace_back(text.substr(start, i - start));
    offsets.push_back(start);
  }
}

BackendResponse MockBackend::query(const BackendRequest& req) const {
  BackendResponse r;
  r.id = req.id;
  tokenize(req.text, r.tokens, r.offsets);
  r.logprobs.reserve(r.tokens.size());
  for (std::size_t i = 0; i < r.tokens.size(); ++i) {
    const double p = rule_(r.tokens[i], i);
    if (!(p > 0.0 && p <= 1.0)) throw BackendError("mock probability outside (0, 1]");
    r.logprobs.push_back(std::log(p));
  }
  // A two-outcome vocabulary per position: the token and everything else.
  if (!r.tokens.empty()) r.normcheck = NormCheck{0, 0.0};
  return r;
}

// ---------------------------------------------------------------------------

HttpBackend::HttpBackend(std::string url, std::chrono::milliseconds timeout) : timeout_(timeout) {
  const auto scheme = url.find("://");
  if (scheme == std::string::npos) throw BackendError("backend URL needs a scheme: " + url);
  const auto slash = url.find('/', scheme + 3);
  if (slash == std::string::npos) {
    origin_ = url;
    path_ = "/score";
  } else {
    origin_ = url.substr(0, slash);
    path_ = url.substr(slash);
    if (path_ == "/") path_ = "/score";
  }
}

BackendResponse HttpBackend::query(const BackendRequest& req) const {
  httplib::Client cli(origin_);
  if (!cli.is_valid()) throw BackendError("invalid backend URL " + origin_);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout_);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout_ - secs);
  cli.set_connection_timeout(secs.count(), usecs.count());
  cli.set_read_timeout(secs.count(), usecs.count());
  auto res = cli.Post(path_, encode_request(req), "application/json");
  if (!res) throw BackendError("backend request failed: " + httplib::to_string(res.error()));
  if (res->status != 200) throw BackendError("backend returned HTTP " + std::to_string(res->status));
  return decode_response(res->body);
}

}  // namespace kpigen
