// Prompt templates for the four behavior-finetuning patterns.
//
// The stock family reproduces the reference prompts byte for byte, including
// their irregular spacing and the quote-wrapping of patterns 2-4 (the whole
// input is enclosed in double quotes and inner quotes are doubled). The
// twitter family follows the same layout with likes as the only KPI.

#include <algorithm>
#include <array>

#include "kpigen/dataset.hpp"

namespace kpigen {

namespace {

constexpr std::string_view kColourList =
    "['Red', 'Dark_Red', 'Green', 'Bright_Green', 'Dark_Green', 'Light_Green', 'Mud_Green', 'Blue', 'Dark_Blue', "
    "'Light_Blue', 'Royal_Blue', 'Black', 'White', 'Off_White', 'Gray', 'Dark_Gray', 'Silver', 'Cream', 'Magenta', "
    "'Cyan', 'Yellow', 'Mustard', 'Khaki', 'Brown', 'Dark_Brown', 'Violet', 'Pink', 'Dark_Pink', 'Maroon', 'Tan', "
    "'Purple', 'Lavender', 'Turquoise', 'Plum', 'Gold', 'Emerald', 'Orange', 'Beige', 'Lilac', 'Olive']";

constexpr std::string_view kNowPredict = "Now, predict the attributes for the following image: ";
constexpr std::string_view kAnswer = "Answer properly in JSON format. Do not include any other information in your answer.";

struct KpiText {
  std::string_view key;          // MediaRecord::kpis key
  std::string_view exact_label;  // P1 input label
  std::string_view approx_label; // P2/P3 input label
};

struct PatternText {
  std::string_view intro;        // first line
  std::string_view task;         // second line, with {colours} substituted
  std::string_view open;         // before the first field
  std::string_view close_prefix; // before the answer instruction
  std::string_view close_suffix; // after it
  bool quoted;
};

struct Family {
  std::string_view caption_label;
  std::string_view second_label;  // keywords (stock) or account (twitter)
  std::string_view date_label;
  std::vector<KpiText> kpis;
  std::array<PatternText, 4> patterns;
};

const Family& stock_family() {
  static const Family f{
      "captions",
      "keywords",
      "release date",
      {
          {"downloads", "number of downloads", "approximate number of downloads that the creator wants to achieve"},
          {"forwards", "number of forwards", "approximate number of forwards that the creator wants to achieve"},
          {"impressions", "number of impressions",
           "approximate number of impressions/views that the creator wants to achieve"},
      },
      {{
          {"You are a smart model. I am giving you some data regarding an image - (1) captions (2) keywords (3) image "
           "resolution i.e. (width, height) (4) release date (5) number of downloads i.e. how many times the image was "
           "downloaded (6) number of forwards i.e. how many times the image was forwarded to someone else (7) number "
           "of impressions i.e. how many times the image was seen by someone. Note that (5), (6) and (7) are Key "
           "Performance Indicators (KPIs) of the image, thus they are important signals of its perceived quality and "
           "popularity.",
           "You have to predict following attributes of the image: (1) colour and tones from the lists given below: - "
           "Allowed colours: {colours}  - Allowed tones: ['warm', 'neutral', 'cool'] (2) main objects present in the "
           "image and the diagonal coordinates of their bounding boxes: [x1, y1, x2, y2]",
           "[", "] ", "", false},
          {"You are a smart model. I am giving giving you some data regarding an image released by a content creator "
           "- (1) captions (2) keywords (3) image resolution i.e. (width, height) (4) release date (5) approximate "
           "number of downloads that the creator wants to achieve (6) approximate number of forwards that the creator "
           "wants to achieve (7) approximate number of impressions/views that the creator wants to achieve",
           "You have to predict following attributes of the image: (1) colour and tones from the lists given below: - "
           "Allowed colours: {colours} - Allowed tones: ['warm', 'neutral', 'cool']  (2) main objects present in the "
           "image and the diagonal coordinates of their bounding boxes: [x1, y1, x2, y2]  (3) exact number of "
           "downloads that the image will get  (4) exact number of forwards that the image will get  (5) exact number "
           "of impressions/views that the image will get",
           "[ ", " ] ", "", true},
          {"You are a smart model. I am giving giving you some data regarding an image released by a content creator "
           "- (1) captions (2) keywords (3) image resolution i.e. (width, height) (4) release date (5) approximate "
           "number of downloads that the creator wants to achieve (6) approximate number of forwards that the creator "
           "wants to achieve (7) approximate number of impressions/views that the creator wants to achieve",
           "You have to predict following attributes of the image: (1) exact number of downloads that the image will "
           "get (2) exact number of forwards that the image will get (3) exact number of impressions/views that the "
           "image will get.",
           "[ ", " ] ", " ", true},
          {"You are a smart model. I am giving giving you some data regarding an image released by a content creator "
           "- (1) captions (2) keywords (3) image resolution i.e. (width, height) (4) release date",
           "You have to predict following attributes of the image: (1) exact number of downloads that the image will "
           "get (2) exact number of forwards that the image will get (3) exact number of impressions/views that the "
           "image will get",
           "[", " ]. ", "", true},
      }},
  };
  return f;
}

const Family& twitter_family() {
  static const Family f{
      "tweet text",
      "account",
      "post date",
      {
          {"likes", "number of likes", "approximate number of likes that the account wants to achieve"},
      },
      {{
          {"You are a smart model. I am giving you some data regarding an image posted in a tweet - (1) tweet text (2) "
           "account (3) image resolution i.e. (width, height) (4) post date (5) number of likes i.e. how many users "
           "liked the tweet. Note that (5) is a Key Performance Indicator (KPI) of the image, thus it is an important "
           "signal of its perceived quality and popularity.",
           "You have to predict following attributes of the image: (1) colour and tones from the lists given below: - "
           "Allowed colours: {colours} - Allowed tones: ['warm', 'neutral', 'cool'] (2) main objects present in the "
           "image and the diagonal coordinates of their bounding boxes: [x1, y1, x2, y2]",
           "[", "] ", "", false},
          {"You are a smart model. I am giving you some data regarding an image posted in a tweet by an account - (1) "
           "tweet text (2) account (3) image resolution i.e. (width, height) (4) post date (5) approximate number of "
           "likes that the account wants to achieve",
           "You have to predict following attributes of the image: (1) colour and tones from the lists given below: - "
           "Allowed colours: {colours} - Allowed tones: ['warm', 'neutral', 'cool'] (2) main objects present in the "
           "image and the diagonal coordinates of their bounding boxes: [x1, y1, x2, y2] (3) exact number of likes "
           "that the image will get",
           "[", "] ", "", true},
          {"You are a smart model. I am giving you some data regarding an image posted in a tweet by an account - (1) "
           "tweet text (2) account (3) image resolution i.e. (width, height) (4) post date (5) approximate number of "
           "likes that the account wants to achieve",
           "You have to predict following attributes of the image: (1) exact number of likes that the image will get",
           "[", "] ", "", true},
          {"You are a smart model. I am giving you some data regarding an image posted in a tweet by an account - (1) "
           "tweet text (2) account (3) image resolution i.e. (width, height) (4) post date",
           "You have to predict following attributes of the image: (1) exact number of likes that the image will get",
           "[", "] ", "", true},
      }},
  };
  return f;
}

const Family& family(Schema s) { return s == Schema::stock ? stock_family() : twitter_family(); }

constexpr std::array<std::string_view, 3> kStockKpis{"downloads", "forwards", "impressions"};
constexpr std::array<std::string_view, 1> kTwitterKpis{"likes"};

std::string replace_all(std::string s, std::string_view from, std::string_view to) {
  for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
    s.replace(pos, from.size(), to);
  }
  return s;
}

std::string field(std::string_view label, std::string_view value) {
  std::string out(label);
  out += ": \"";
  out += value;
  out += '"';
  return out;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i > 0) out += sep;
    out += parts[i];
  }
  return out;
}

std::int64_t kpi_of(const KpiMap& kpis, std::string_view key, const std::string& id) {
  auto it = kpis.find(std::string(key));
  if (it == kpis.end()) throw DatasetError("record " + id + " has no KPI \"" + std::string(key) + "\"");
  return it->second;
}

// `, "exact downloads": 4, ...` without the braces.
std::string exact_fields(const Family& fam, const MediaRecord& r) {
  std::vector<std::string> parts;
  for (const auto& k : fam.kpis) {
    parts.push_back(json_quote("exact " + std::string(k.key)) + ": " + format_count(kpi_of(r.kpis, k.key, r.id)));
  }
  return join(parts, ", ");
}

}  // namespace

std::string_view pattern_name(Pattern p) {
  static constexpr std::array<std::string_view, 4> names{"P1", "P2", "P3", "P4"};
  return names[static_cast<std::size_t>(p)];
}

std::optional<Pattern> parse_pattern(std::string_view s) {
  for (std::size_t i = 0; i < 4; ++i) {
    if (pattern_name(static_cast<Pattern>(i)) == s) return static_cast<Pattern>(i);
  }
  return std::nullopt;
}

std::optional<Schema> parse_schema(std::string_view s) {
  if (s == "stock") return Schema::stock;
  if (s == "twitter") return Schema::twitter;
  return std::nullopt;
}

std::span<const std::string_view> schema_kpis(Schema s) {
  if (s == Schema::stock) return kStockKpis;
  return kTwitterKpis;
}

InstructionPair render_instruction(const MediaRecord& record, Pattern pattern, Schema schema,
                                   const KpiMap& input_kpis) {
  const Family& fam = family(schema);
  const PatternText& t = fam.patterns[static_cast<std::size_t>(pattern)];
  const bool wants_verbalization = pattern == Pattern::P1 || pattern == Pattern::P2;
  if (wants_verbalization && !record.verbalization) {
    throw DatasetError("record " + record.id + " needs a verbalization for pattern " + std::string(pattern_name(pattern)));
  }

  std::vector<std::string> fields;
  fields.push_back(field(fam.caption_label, record.caption));
  fields.push_back(field(fam.second_label, schema == Schema::stock ? join(record.keywords, ", ") : record.account));
  fields.push_back(field("image resolution", "(" + std::to_string(record.resolution.width) + ", " +
                                                 std::to_string(record.resolution.height) + ")"));
  fields.push_back(field(fam.date_label, record.date()));
  if (pattern != Pattern::P4) {
    for (const auto& k : fam.kpis) {
      const auto label = pattern == Pattern::P1 ? k.exact_label : k.approx_label;
      fields.push_back(field(label, format_count(kpi_of(input_kpis, k.key, record.id))));
    }
  }

  std::string body = std::string(t.intro) + "\n" + replace_all(std::string(t.task), "{colours}", kColourList) + "\n" +
                     std::string(kNowPredict) + std::string(t.open) + join(fields, ", ") + std::string(t.close_prefix) +
                     std::string(kAnswer) + std::string(t.close_suffix);
  if (t.quoted) body = "\"" + replace_all(body, "\"", "\"\"") + "\"";

  InstructionPair pair;
  pair.pattern = pattern;
  pair.source_id = record.id;
  pair.input_text = std::move(body);
  switch (pattern) {
    case Pattern::P1:
      pair.output_text = serialize_verbalization(*record.verbalization);
      break;
    case Pattern::P2: {
      std::string v = serialize_verbalization(*record.verbalization);
      v.pop_back();  // closing brace
      pair.output_text = v + ", " + exact_fields(fam, record) + "}";
      break;
    }
    case Pattern::P3:
    case Pattern::P4:
      pair.output_text = "{" + exact_fields(fam, record) + "}";
      break;
  }
  return pair;
}

std::string listing_text(const InstructionPair& pair) {
  return "Input: " + pair.input_text + "\n\nOutput: " + pair.output_text + "\n";
}

}  // namespace kpigen
