#pragma once

// Order- and duplicate-preserving JSON document tree.
//
// Verbalization records key objects by label, and a single image routinely
// contains several objects with the same label, so the parsed tree must keep
// every member in source order. Parsing is delegated to nlohmann's SAX
// interface; this header only owns the tree shape.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace kpigen {

class JsonError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct JsonNode {
  enum class Kind { null, boolean, number, string, array, object };

  Kind kind = Kind::null;
  bool boolean = false;
  double number = 0.0;
  bool integral = false;  // number was written without fraction/exponent
  std::string text;       // string payload
  std::vector<JsonNode> items;
  std::vector<std::pair<std::string, JsonNode>> members;

  bool is_object() const { return kind == Kind::object; }
  bool is_array() const { return kind == Kind::array; }
  bool is_number() const { return kind == Kind::number; }
  bool is_string() const { return kind == Kind::string; }

  // First member with the given key, or nullptr.
  const JsonNode* find(std::string_view key) const;
  // Like find() but throws JsonError when absent.
  const JsonNode& at(std::string_view key) const;

  double as_number() const;
  const std::string& as_string() const;
};

// Parses one JSON document. Throws JsonError on malformed input.
JsonNode parse_json(std::string_view text);

// Quotes and escapes a string as a JSON string literal.
std::string json_quote(std::string_view s);

// Renders a double the way Python's json module renders a float
// (shortest round-trip digits, always with a fraction or exponent), except
// that zero is rendered as the bare integer 0.
std::string format_number(double value);

// Renders an integer count.
std::string format_count(std::int64_t value);

}  // namespace kpigen
