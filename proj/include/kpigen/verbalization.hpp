#pragma once

// Image verbalization: colors with area coverage, a warm/neutral/cool tone
// mix, and labelled objects with bounding boxes. This is the unit every
// metric and reward in the toolkit consumes.
//
// Record layout (one JSON object, UTF-8):
//
//   {"color and tones": {"colors": {"Gray": {"coverage": 0.4}, ...},
//                        "tones": {"warm": 0, "neutral": 1.0, "cool": 0}},
//    "objects": {"jeans": [x1, y1, x2, y2], ...}}
//
// Boxes are pixel coordinates with the origin at the top-left corner, x to
// the right and y downwards. Object labels may repeat.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "kpigen/ordered_json.hpp"

namespace kpigen {

enum class Color : std::uint8_t {
  Red, Dark_Red, Green, Bright_Green, Dark_Green, Light_Green, Mud_Green, Blue,
  Dark_Blue, Light_Blue, Royal_Blue, Black, White, Off_White, Gray, Dark_Gray,
  Silver, Cream, Magenta, Cyan, Yellow, Mustard, Khaki, Brown, Dark_Brown,
  Violet, Pink, Dark_Pink, Maroon, Tan, Purple, Lavender, Turquoise, Plum,
  Gold, Emerald, Orange, Beige, Lilac, Olive,
};

inline constexpr std::size_t kColorCount = 40;

// All colors in declaration order (the order of the allowed-colours list).
const std::array<Color, kColorCount>& all_colors();
std::string_view color_name(Color c);
std::optional<Color> parse_color(std::string_view name);

enum class Tone : std::uint8_t { warm, neutral, cool };

inline constexpr std::array<Tone, 3> kTones{Tone::warm, Tone::neutral, Tone::cool};
std::string_view tone_name(Tone t);

enum class ValidationMode { strict, lenient };

struct Resolution {
  int width = 0;
  int height = 0;

  double area() const { return static_cast<double>(width) * height; }
  bool operator==(const Resolution&) const = default;
};

struct ColorEntry {
  Color color{};
  double coverage = 0.0;

  bool operator==(const ColorEntry&) const = default;
};

struct ToneMix {
  std::array<double, 3> proportions{0.0, 0.0, 0.0};

  double operator[](Tone t) const { return proportions[static_cast<std::size_t>(t)]; }
  double& operator[](Tone t) { return proportions[static_cast<std::size_t>(t)]; }
  // A tone is present in the image iff its proportion is positive.
  bool present(Tone t) const { return (*this)[t] > 0.0; }
  double sum() const { return proportions[0] + proportions[1] + proportions[2]; }

  bool operator==(const ToneMix&) const = default;
};

struct BBox {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }
  std::array<double, 2> centroid() const { return {(x1 + x2) / 2.0, (y1 + y2) / 2.0}; }

  bool operator==(const BBox&) const = default;
};

struct ObjectEntry {
  std::string label;
  BBox box;

  bool operator==(const ObjectEntry&) const = default;
};

struct Verbalization {
  std::vector<ColorEntry> colors;
  ToneMix tones;
  std::vector<ObjectEntry> objects;

  // Structural equality: colors compare as a set keyed by name, objects in
  // order.
  bool operator==(const Verbalization& other) const;
};

// Sorts colors into canonical order: descending coverage, then name.
void canonicalize(Verbalization& v);

class VerbalizationError : public std::runtime_error {
 public:
  enum class Kind { malformed, unknown_color, degenerate_bbox, missing_tones, invalid_value, duplicate };

  VerbalizationError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

struct ParsedVerbalization {
  Verbalization value;
  std::vector<std::string> repairs;  // always empty in strict mode
};

// Parses a record. Strict mode throws VerbalizationError on the first
// violation; lenient mode repairs what it can and lists each repair. A
// missing "tones" block or malformed JSON is an error in both modes.
// Unrecognized top-level keys (e.g. "exact downloads") are ignored.
ParsedVerbalization parse_verbalization(std::string_view text, ValidationMode mode,
                                        std::optional<Resolution> resolution = std::nullopt);
ParsedVerbalization parse_verbalization(const JsonNode& record, ValidationMode mode,
                                        std::optional<Resolution> resolution = std::nullopt);

// Checks a constructed verbalization against the strict rules. Throws
// VerbalizationError on the first violation.
void validate_strict(const Verbalization& v, std::optional<Resolution> resolution = std::nullopt);

// Canonical, byte-stable rendering in the record layout above.
std::string serialize_verbalization(const Verbalization& v);

// One record of a newline-delimited corpus. A line is either a bare record or
// an envelope {"id": ..., "resolution": [w, h], "record": {...}}; bare records
// are identified by their 1-based line number.
struct CorpusEntry {
  std::string id;
  std::size_t line = 0;
  std::optional<Resolution> resolution;
  std::optional<Verbalization> value;  // empty when the line failed
  std::vector<std::string> repairs;
  std::string error;
};

std::vector<CorpusEntry> read_verbalization_corpus(std::istream& in, ValidationMode mode);

// Envelope line for one corpus entry.
std::string corpus_line(const std::string& id, const Verbalization& v,
                        std::optional<Resolution> resolution = std::nullopt);

}  // namespace kpigen
