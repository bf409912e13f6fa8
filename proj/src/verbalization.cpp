#include "kpigen/verbalization.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <sstream>

namespace kpigen {

namespace {

constexpr std::array<std::string_view, kColorCount> kColorNames{
    "Red",       "Dark_Red",   "Green",      "Bright_Green", "Dark_Green", "Light_Green", "Mud_Green",
    "Blue",      "Dark_Blue",  "Light_Blue", "Royal_Blue",   "Black",      "White",       "Off_White",
    "Gray",      "Dark_Gray",  "Silver",     "Cream",        "Magenta",    "Cyan",        "Yellow",
    "Mustard",   "Khaki",      "Brown",      "Dark_Brown",   "Violet",     "Pink",        "Dark_Pink",
    "Maroon",    "Tan",        "Purple",     "Lavender",     "Turquoise",  "Plum",        "Gold",
    "Emerald",   "Orange",     "Beige",      "Lilac",        "Olive",
};

constexpr double kToneSumTolerance = 0.01;

using Kind = VerbalizationError::Kind;

// Collects violations: throws in strict mode, records a repair note in
// lenient mode.
class Checker {
 public:
  explicit Checker(ValidationMode mode) : mode_(mode) {}

  bool lenient() const { return mode_ == ValidationMode::lenient; }

  void violation(Kind kind, const std::string& problem, const std::string& repair) {
    if (!lenient()) throw VerbalizationError(kind, problem);
    repairs.push_back(problem + "; " + repair);
  }

  std::vector<std::string> repairs;

 private:
  ValidationMode mode_;
};

bool color_before(const ColorEntry& a, const ColorEntry& b) {
  if (a.coverage != b.coverage) return a.coverage > b.coverage;
  return color_name(a.color) < color_name(b.color);
}

std::string describe(const BBox& b) {
  std::ostringstream os;
  os << "[" << format_number(b.x1) << ", " << format_number(b.y1) << ", " << format_number(b.x2) << ", "
     << format_number(b.y2) << "]";
  return os.str();
}

bool blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c) != 0; });
}

void check_coverage(Checker& chk, ColorEntry& e) {
  if (!std::isfinite(e.coverage)) throw VerbalizationError(Kind::invalid_value, "non-finite coverage");
  if (e.coverage < 0.0 || e.coverage > 1.0) {
    const std::string problem =
        "coverage " + format_number(e.coverage) + " of " + std::string(color_name(e.color)) + " outside [0, 1]";
    e.coverage = std::clamp(e.coverage, 0.0, 1.0);
    chk.violation(Kind::invalid_value, problem, "clamped to " + format_number(e.coverage));
  }
}

void check_tones(Checker& chk, ToneMix& tones) {
  for (Tone t : kTones) {
    double& p = tones[t];
    if (!std::isfinite(p)) throw VerbalizationError(Kind::invalid_value, "non-finite tone proportion");
    if (p < 0.0 || p > 1.0) {
      const std::string problem = "tone " + std::string(tone_name(t)) + " proportion " + format_number(p) +
                                  " outside [0, 1]";
      p = std::clamp(p, 0.0, 1.0);
      chk.violation(Kind::invalid_value, problem, "clamped");
    }
  }
  const double sum = tones.sum();
  if (std::fabs(sum - 1.0) > kToneSumTolerance) {
    const std::string problem = "tone proportions sum to " + format_number(sum);
    if (sum > 0.0) {
      for (double& p : tones.proportions) p /= sum;
      chk.violation(Kind::invalid_value, problem, "renormalized");
    } else {
      tones[Tone::neutral] = 1.0;
      chk.violation(Kind::invalid_value, problem, "set to neutral 1.0");
    }
  }
}

// Returns false when the object should be dropped.
bool check_object(Checker& chk, ObjectEntry& o, std::optional<Resolution> res) {
  if (blank(o.label)) {
    chk.violation(Kind::invalid_value, "object with empty label", "dropped");
    return false;
  }
  BBox& b = o.box;
  for (double c : {b.x1, b.y1, b.x2, b.y2}) {
    if (!std::isfinite(c)) throw VerbalizationError(Kind::invalid_value, "non-finite box coordinate");
  }
  if (b.x1 > b.x2 || b.y1 > b.y2) {
    const std::string problem = "object \"" + o.label + "\" has inverted corners " + describe(b);
    if (b.x1 > b.x2) std::swap(b.x1, b.x2);
    if (b.y1 > b.y2) std::swap(b.y1, b.y2);
    chk.violation(Kind::degenerate_bbox, problem, "corners swapped to " + describe(b));
  }
  if (b.x1 == b.x2 || b.y1 == b.y2) {
    chk.violation(Kind::degenerate_bbox, "object \"" + o.label + "\" has zero-area box " + describe(b),
                  "kept unchanged");
  }
  if (res) {
    const double w = res->width;
    const double h = res->height;
    if (b.x1 < 0.0 || b.y1 < 0.0 || b.x2 > w || b.y2 > h) {
      const std::string problem = "object \"" + o.label + "\" box " + describe(b) + " outside image";
      b.x1 = std::clamp(b.x1, 0.0, w);
      b.x2 = std::clamp(b.x2, 0.0, w);
      b.y1 = std::clamp(b.y1, 0.0, h);
      b.y2 = std::clamp(b.y2, 0.0, h);
      chk.violation(Kind::invalid_value, problem, "clamped to " + describe(b));
    }
  }
  return true;
}

void check_all(Checker& chk, Verbalization& v, std::optional<Resolution> res) {
  std::vector<ColorEntry> colors;
  for (ColorEntry e : v.colors) {
    auto dup = std::find_if(colors.begin(), colors.end(), [&](const ColorEntry& c) { return c.color == e.color; });
    if (dup != colors.end()) {
      chk.violation(Kind::duplicate, "duplicate color " + std::string(color_name(e.color)), "kept first");
      continue;
    }
    check_coverage(chk, e);
    colors.push_back(e);
  }
  v.colors = std::move(colors);

  check_tones(chk, v.tones);

  std::vector<ObjectEntry> objects;
  for (ObjectEntry o : v.objects) {
    if (!check_object(chk, o, res)) continue;
    if (std::find(objects.begin(), objects.end(), o) != objects.end()) {
      chk.violation(Kind::duplicate, "duplicate object \"" + o.label + "\" " + describe(o.box), "dropped");
      continue;
    }
    objects.push_back(std::move(o));
  }
  v.objects = std::move(objects);
  canonicalize(v);
}

const JsonNode& require_object(const JsonNode& n, std::string_view what) {
  if (!n.is_object()) throw VerbalizationError(Kind::malformed, std::string(what) + " must be an object");
  return n;
}

}  // namespace

const std::array<Color, kColorCount>& all_colors() {
  static const auto colors = [] {
    std::array<Color, kColorCount> out{};
    for (std::size_t i = 0; i < kColorCount; ++i) out[i] = static_cast<Color>(i);
    return out;
  }();
  return colors;
}

std::string_view color_name(Color c) { return kColorNames[static_cast<std::size_t>(c)]; }

std::optional<Color> parse_color(std::string_view name) {
  for (std::size_t i = 0; i < kColorCount; ++i) {
    if (kColorNames[i] == name) return static_cast<Color>(i);
  }
  return std::nullopt;
}

std::string_view tone_name(Tone t) {
  switch (t) {
    case Tone::warm: return "warm";
    case Tone::neutral: return "neutral";
    case Tone::cool: return "cool";
  }
  return "";
}

bool Verbalization::operator==(const Verbalization& other) const {
  if (tones != other.tones || objects != other.objects || colors.size() != other.colors.size()) return false;
  auto a = colors;
  auto b = other.colors;
  std::sort(a.begin(), a.end(), color_before);
  std::sort(b.begin(), b.end(), color_before);
  return a == b;
}

void canonicalize(Verbalization& v) { std::stable_sort(v.colors.begin(), v.colors.end(), color_before); }

ParsedVerbalization parse_verbalization(const JsonNode& record, ValidationMode mode,
                                        std::optional<Resolution> resolution) {
  Checker chk(mode);
  Verbalization v;
  require_object(record, "record");

  const JsonNode* ct = record.find("color and tones");
  if (ct == nullptr) throw VerbalizationError(Kind::missing_tones, "missing \"color and tones\" block");
  require_object(*ct, "\"color and tones\"");

  const JsonNode* colors = ct->find("colors");
  if (colors == nullptr) throw VerbalizationError(Kind::malformed, "missing \"colors\" block");
  require_object(*colors, "\"colors\"");
  for (const auto& [name, entry] : colors->members) {
    const auto color = parse_color(name);
    if (!color) {
      chk.violation(Kind::unknown_color, "unknown color \"" + name + "\"", "dropped");
      continue;
    }
    require_object(entry, "color entry");
    const JsonNode* cov = entry.find("coverage");
    if (cov == nullptr || !cov->is_number()) {
      throw VerbalizationError(Kind::malformed, "color \"" + name + "\" lacks a numeric coverage");
    }
    v.colors.push_back({*color, cov->number});
  }

  const JsonNode* tones = ct->find("tones");
  if (tones == nullptr) throw VerbalizationError(Kind::missing_tones, "missing \"tones\" block");
  require_object(*tones, "\"tones\"");
  for (Tone t : kTones) {
    const JsonNode* p = tones->find(tone_name(t));
    if (p == nullptr) {
      chk.violation(Kind::missing_tones, "tone \"" + std::string(tone_name(t)) + "\" missing", "set to 0");
      continue;
    }
    if (!p->is_number()) throw VerbalizationError(Kind::malformed, "tone proportion must be a number");
    v.tones[t] = p->number;
  }
  for (const auto& [name, p] : tones->members) {
    const bool known = std::any_of(kTones.begin(), kTones.end(), [&](Tone t) { return tone_name(t) == name; });
    if (!known) chk.violation(Kind::invalid_value, "unknown tone \"" + name + "\"", "dropped");
  }

  const JsonNode* objects = record.find("objects");
  if (objects == nullptr) throw VerbalizationError(Kind::malformed, "missing \"objects\" block");
  require_object(*objects, "\"objects\"");
  for (const auto& [label, box] : objects->members) {
    if (!box.is_array() || box.items.size() != 4 ||
        !std::all_of(box.items.begin(), box.items.end(), [](const JsonNode& n) { return n.is_number(); })) {
      throw VerbalizationError(Kind::malformed, "object \"" + label + "\" box must be [x1, y1, x2, y2]");
    }
    v.objects.push_back({label, {box.items[0].number, box.items[1].number, box.items[2].number, box.items[3].number}});
  }

  check_all(chk, v, resolution);
  return {std::move(v), std::move(chk.repairs)};
}

ParsedVerbalization parse_verbalization(std::string_view text, ValidationMode mode,
                                        std::optional<Resolution> resolution) {
  JsonNode root;
  try {
    root = parse_json(text);
  } catch (const JsonError& e) {
    throw VerbalizationError(Kind::malformed, e.what());
  }
  return parse_verbalization(root, mode, resolution);
}

void validate_strict(const Verbalization& v, std::optional<Resolution> resolution) {
  Checker chk(ValidationMode::strict);
  Verbalization copy = v;
  check_all(chk, copy, resolution);
}

std::string serialize_verbalization(const Verbalization& v) {
  std::vector<ColorEntry> colors = v.colors;
  std::stable_sort(colors.begin(), colors.end(), color_before);

  std::string out = "{\"color and tones\": {\"colors\": {";
  for (std::size_t i = 0; i < colors.size(); ++i) {
    if (i > 0) out += ", ";
    out += json_quote(color_name(colors[i].color));
    out += ": {\"coverage\": ";
    out += format_number(colors[i].coverage);
    out += "}";
  }
  out += "}, \"tones\": {";
  for (std::size_t i = 0; i < kTones.size(); ++i) {
    if (i > 0) out += ", ";
    out += json_quote(tone_name(kTones[i]));
    out += ": ";
    out += format_number(v.tones[kTones[i]]);
  }
  out += "}}, \"objects\": {";
  for (std::size_t i = 0; i < v.objects.size(); ++i) {
    const auto& o = v.objects[i];
    if (i > 0) out += ", ";
    out += json_quote(o.label);
    out += ": [" + format_number(o.box.x1) + ", " + format_number(o.box.y1) + ", " + format_number(o.box.x2) +
           ", " + format_number(o.box.y2) + "]";
  }
  out += "}}";
  return out;
}

std::vector<CorpusEntry> read_verbalization_corpus(std::istream& in, ValidationMode mode) {
  std::vector<CorpusEntry> entries;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (blank(line)) continue;
    CorpusEntry entry;
    entry.line = lineno;
    entry.id = std::to_string(lineno);
    try {
      const JsonNode root = parse_json(line);
      const JsonNode* record = &root;
      if (const JsonNode* inner = root.find("record")) {
        record = inner;
        if (const JsonNode* id = root.find("id")) {
          entry.id = id->is_string() ? id->text : format_number(id->as_number());
          if (id->is_number() && id->integral) entry.id = format_count(static_cast<std::int64_t>(id->number));
        }
        if (const JsonNode* res = root.find("resolution")) {
          if (!res->is_array() || res->items.size() != 2) throw JsonError("resolution must be [width, height]");
          entry.resolution = Resolution{static_cast<int>(res->items[0].as_number()),
                                        static_cast<int>(res->items[1].as_number())};
        }
      }
      auto parsed = parse_verbalization(*record, mode, entry.resolution);
      entry.value = std::move(parsed.value);
      entry.repairs = std::move(parsed.repairs);
    } catch (const std::exception& e) {
      entry.error = e.what();
    }
    entries.push_back(std::move(entry));
  }
  return entries;
}

std::string corpus_line(const std::string& id, const Verbalization& v, std::optional<Resolution> resolution) {
  std::string out = "{\"id\": " + json_quote(id);
  if (resolution) {
    out += ", \"resolution\": [" + std::to_string(resolution->width) + ", " + std::to_string(resolution->height) + "]";
  }
  out += ", \"record\": " + serialize_verbalization(v) + "}";
  return out;
}

}  // namespace kpigen
