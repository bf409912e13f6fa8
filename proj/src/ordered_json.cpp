#include "kpigen/ordered_json.hpp"

#include <json.hpp>

#include <charconv>
#include <cmath>

namespace kpigen {

namespace {

class TreeBuilder : public nlohmann::json_sax<nlohmann::json> {
 public:
  JsonNode root;

  bool null() override { return put(JsonNode{}); }

  bool boolean(bool v) override {
    JsonNode n;
    n.kind = JsonNode::Kind::boolean;
    n.boolean = v;
    return put(std::move(n));
  }

  bool number_integer(number_integer_t v) override { return put(integral(static_cast<double>(v))); }
  bool number_unsigned(number_unsigned_t v) override { return put(integral(static_cast<double>(v))); }

  bool number_float(number_float_t v, const string_t&) override {
    JsonNode n;
    n.kind = JsonNode::Kind::number;
    n.number = v;
    return put(std::move(n));
  }

  bool string(string_t& v) override {
    JsonNode n;
    n.kind = JsonNode::Kind::string;
    n.text = std::move(v);
    return put(std::move(n));
  }

  bool binary(binary_t&) override { return false; }

  bool start_object(std::size_t) override {
    JsonNode n;
    n.kind = JsonNode::Kind::object;
    stack_.push_back({std::move(n), pending_key_, has_key_});
    has_key_ = false;
    return true;
  }

  bool key(string_t& k) override {
    pending_key_ = k;
    has_key_ = true;
    return true;
  }

  bool end_object() override { return close(); }

  bool start_array(std::size_t) override {
    JsonNode n;
    n.kind = JsonNode::Kind::array;
    stack_.push_back({std::move(n), pending_key_, has_key_});
    has_key_ = false;
    return true;
  }

  bool end_array() override { return close(); }

  bool parse_error(std::size_t position, const std::string&,
                   const nlohmann::detail::exception& ex) override {
    throw JsonError("malformed JSON at byte " + std::to_string(position) + ": " + ex.what());
  }

 private:
  struct Frame {
    JsonNode node;
    std::string key;  // key under which this container sits in its parent
    bool keyed;
  };

  static JsonNode integral(double v) {
    JsonNode n;
    n.kind = JsonNode::Kind::number;
    n.number = v;
    n.integral = true;
    return n;
  }

  bool put(JsonNode n) {
    if (stack_.empty()) {
      root = std::move(n);
      return true;
    }
    JsonNode& parent = stack_.back().node;
    if (parent.kind == JsonNode::Kind::object) {
      parent.members.emplace_back(std::move(pending_key_), std::move(n));
      pending_key_.clear();
      has_key_ = false;
    } else {
      parent.items.push_back(std::move(n));
    }
    return true;
  }

  bool close() {
    Frame f = std::move(stack_.back());
    stack_.pop_back();
    pending_key_ = std::move(f.key);
    has_key_ = f.keyed;
    return put(std::move(f.node));
  }

  std::vector<Frame> stack_;
  std::string pending_key_;
  bool has_key_ = false;
};

}  // namespace

const JsonNode* JsonNode::find(std::string_view key) const {
  for (const auto& [k, v] : members) {
    if (k == key) return &v;
  }
  return nullptr;
}

const JsonNode& JsonNode::at(std::string_view key) const {
  const JsonNode* n = find(key);
  if (n == nullptr) throw JsonError("missing key \"" + std::string(key) + "\"");
  return *n;
}

double JsonNode::as_number() const {
  if (kind != Kind::number) throw JsonError("expected a number");
  return number;
}

const std::string& JsonNode::as_string() const {
  if (kind != Kind::string) throw JsonError("expected a string");
  return text;
}

JsonNode parse_json(std::string_view text) {
  TreeBuilder builder;
  bool ok = nlohmann::json::sax_parse(text.begin(), text.end(), &builder);
  if (!ok) throw JsonError("malformed JSON");
  return std::move(builder.root);
}

std::string json_quote(std::string_view s) { return nlohmann::json(std::string(s)).dump(); }

std::string format_number(double value) {
  if (value == 0.0) return "0";
  if (!std::isfinite(value)) throw JsonError("non-finite number cannot be serialized");
  char buf[64];
  const double mag = std::fabs(value);
  const auto fmt = (mag >= 1e-4 && mag < 1e16) ? std::chars_format::fixed : std::chars_format::scientific;
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value, fmt);
  std::string out(buf, end);
  if (out.find_first_of(".e") == std::string::npos) out += ".0";
  return out;
}

std::string format_count(std::int64_t value) { return std::to_string(value); }

}  // namespace kpigen
