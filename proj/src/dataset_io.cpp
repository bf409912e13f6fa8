#include <json.hpp>

#include <istream>
#include <ostream>
#include <sstream>

#include "kpigen/dataset.hpp"
#include "kpigen/io.hpp"

namespace kpigen {

namespace {

std::vector<std::string> split_keywords(std::string_view s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    std::size_t end = s.find(',', start);
    if (end == std::string_view::npos) end = s.size();
    std::string_view kw = s.substr(start, end - start);
    while (!kw.empty() && kw.front() == ' ') kw.remove_prefix(1);
    while (!kw.empty() && kw.back() == ' ') kw.remove_suffix(1);
    if (!kw.empty()) out.emplace_back(kw);
    start = end + 1;
  }
  return out;
}

std::int64_t parse_count(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw DatasetError(what + ": \"" + s + "\" is not an integer");
  }
}

void check_record(const MediaRecord& r) {
  if (r.id.empty()) throw DatasetError("record without id");
  if (r.resolution.width <= 0 || r.resolution.height <= 0) {
    throw DatasetError("record " + r.id + " has a non-positive resolution");
  }
  for (const auto& [k, v] : r.kpis) {
    if (v < 0) throw DatasetError("record " + r.id + " has negative KPI " + k);
  }
}

}  // namespace

void write_pairs(std::ostream& out, std::span<const InstructionPair> pairs) {
  for (const auto& p : pairs) {
    nlohmann::ordered_json j;
    j["pattern"] = pattern_name(p.pattern);
    j["input"] = p.input_text;
    j["output"] = p.output_text;
    j["source_id"] = p.source_id;
    j["seed"] = p.noise_seed;
    out << j.dump() << '\n';
  }
}

std::vector<InstructionPair> read_pairs(std::istream& in) {
  std::vector<InstructionPair> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    InstructionPair p;
    const auto pattern = parse_pattern(j.at("pattern").get<std::string>());
    if (!pattern) throw DatasetError("unknown pattern in pair file");
    p.pattern = *pattern;
    p.input_text = j.at("input").get<std::string>();
    p.output_text = j.at("output").get<std::string>();
    p.source_id = j.at("source_id").get<std::string>();
    p.noise_seed = j.at("seed").get<std::uint64_t>();
    out.push_back(std::move(p));
  }
  return out;
}

MediaRecord parse_media_record(std::string_view json_line, ValidationMode mode) {
  JsonNode root;
  try {
    root = parse_json(json_line);
  } catch (const JsonError& e) {
    throw DatasetError(e.what());
  }
  if (!root.is_object()) throw DatasetError("media record must be a JSON object");
  MediaRecord r;
  try {
    const JsonNode& id = root.at("id");
    r.id = id.is_string() ? id.text : format_count(static_cast<std::int64_t>(id.as_number()));
    if (const auto* n = root.find("account")) r.account = n->as_string();
    if (const auto* n = root.find("timestamp")) r.timestamp = n->as_string();
    if (const auto* n = root.find("caption")) r.caption = n->as_string();
    if (const auto* n = root.find("media_group")) r.media_group = n->as_string();
    if (const auto* n = root.find("keywords")) {
      if (n->is_string()) {
        r.keywords = split_keywords(n->text);
      } else if (n->is_array()) {
        for (const auto& k : n->items) r.keywords.push_back(k.as_string());
      } else {
        throw DatasetError("keywords must be a string or an array");
      }
    }
    const JsonNode& res = root.at("resolution");
    if (!res.is_array() || res.items.size() != 2) throw DatasetError("resolution must be [width, height]");
    r.resolution = {static_cast<int>(res.items[0].as_number()), static_cast<int>(res.items[1].as_number())};
    if (const auto* k = root.find("kpis")) {
      if (!k->is_object()) throw DatasetError("kpis must be an object");
      for (const auto& [name, v] : k->members) {
        if (!v.is_number() || !v.integral) throw DatasetError("KPI " + name + " must be an integer count");
        r.kpis[name] = static_cast<std::int64_t>(v.number);
      }
    }
    if (const auto* v = root.find("verbalization"); v != nullptr && v->kind != JsonNode::Kind::null) {
      r.verbalization = parse_verbalization(*v, mode, r.resolution).value;
    }
  } catch (const JsonError& e) {
    throw DatasetError("record " + (r.id.empty() ? std::string("?") : r.id) + ": " + e.what());
  }
  check_record(r);
  return r;
}

std::string media_record_line(const MediaRecord& r) {
  std::string out = "{\"id\": " + json_quote(r.id) + ", \"account\": " + json_quote(r.account) +
                    ", \"timestamp\": " + json_quote(r.timestamp) + ", \"caption\": " + json_quote(r.caption) +
                    ", \"keywords\": [";
  for (std::size_t i = 0; i < r.keywords.size(); ++i) {
    if (i > 0) out += ", ";
    out += json_quote(r.keywords[i]);
  }
  out += "], \"resolution\": [" + std::to_string(r.resolution.width) + ", " + std::to_string(r.resolution.height) +
         "], \"kpis\": {";
  bool first = true;
  for (const auto& [k, v] : r.kpis) {
    if (!first) out += ", ";
    first = false;
    out += json_quote(k) + ": " + format_count(v);
  }
  out += "}, \"media_group\": " + json_quote(r.media_group);
  if (r.verbalization) out += ", \"verbalization\": " + serialize_verbalization(*r.verbalization);
  out += "}";
  return out;
}

std::vector<MediaRecord> read_media_records(std::istream& in, ValidationMode mode) {
  std::vector<MediaRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(parse_media_record(line, mode));
    } catch (const std::exception& e) {
      throw DatasetError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

ColumnMapping read_column_mapping(std::istream& in) {
  ColumnMapping m;
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      s.erase(0, s.find_first_not_of(" \t\r"));
      s.erase(s.find_last_not_of(" \t\r") + 1);
      return s;
    };
    m[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return m;
}

std::vector<MediaRecord> read_media_table(std::istream& in, const ColumnMapping& mapping, char delimiter,
                                          ValidationMode mode) {
  const auto rows = read_csv(in, delimiter);
  if (rows.empty()) throw DatasetError("empty table");
  const auto& header = rows.front();
  auto column = [&](const std::string& field) -> std::optional<std::size_t> {
    auto it = mapping.find(field);
    const std::string& name = it == mapping.end() ? field : it->second;
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (header[c] == name) return c;
    }
    return std::nullopt;
  };

  const auto id_col = column("id");
  if (!id_col) throw DatasetError("table has no id column");
  const auto account_col = column("account");
  const auto ts_col = column("timestamp");
  const auto caption_col = column("caption");
  const auto kw_col = column("keywords");
  const auto w_col = column("width");
  const auto h_col = column("height");
  const auto group_col = column("media_group");
  const auto verb_col = column("verbalization");
  if (!w_col || !h_col) throw DatasetError("table needs width and height columns");

  // KPI columns: explicit kpi.<name> mappings, else headers named kpi.<name>.
  std::vector<std::pair<std::string, std::size_t>> kpi_cols;
  for (const auto& [field, col] : mapping) {
    if (field.rfind("kpi.", 0) != 0) continue;
    const auto c = column(field);
    if (!c) throw DatasetError("mapped KPI column \"" + col + "\" not found");
    kpi_cols.emplace_back(field.substr(4), *c);
  }
  if (kpi_cols.empty()) {
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (header[c].rfind("kpi.", 0) == 0) kpi_cols.emplace_back(header[c].substr(4), c);
    }
  }

  std::vector<MediaRecord> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& row = rows[i];
    if (row.size() == 1 && row[0].empty()) continue;
    if (row.size() != header.size()) {
      throw DatasetError("table row " + std::to_string(i + 1) + " has " + std::to_string(row.size()) +
                         " fields, expected " + std::to_string(header.size()));
    }
    MediaRecord r;
    r.id = row[*id_col];
    if (account_col) r.account = row[*account_col];
    if (ts_col) r.timestamp = row[*ts_col];
    if (caption_col) r.caption = row[*caption_col];
    if (kw_col) r.keywords = split_keywords(row[*kw_col]);
    if (group_col) r.media_group = row[*group_col];
    r.resolution = {static_cast<int>(parse_count(row[*w_col], "width")),
                    static_cast<int>(parse_count(row[*h_col], "height"))};
    for (const auto& [name, c] : kpi_cols) r.kpis[name] = parse_count(row[c], "KPI " + name);
    if (verb_col && !row[*verb_col].empty()) {
      r.verbalization = parse_verbalization(row[*verb_col], mode, r.resolution).value;
    }
    check_record(r);
    out.push_back(std::move(r));
  }
  return out;
}

void write_bucket_csv(std::ostream& out, std::span<const MediaRecord> records, const BucketResult& result,
                      std::string_view kpi_name) {
  out << "id,account,kpi,label\n";
  for (const auto& r : records) {
    auto it = result.labels.find(r.id);
    auto kpi = r.kpis.find(std::string(kpi_name));
    out << csv_field(r.id) << ',' << csv_field(r.account) << ','
        << (kpi == r.kpis.end() ? std::string() : format_count(kpi->second)) << ','
        << (it == result.labels.end() ? std::string() : std::string(bucket_name(it->second))) << '\n';
  }
}

}  // namespace kpigen
