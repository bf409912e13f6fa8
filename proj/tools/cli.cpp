#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <optional>
#include <sstream>

#include "kpigen/backend.hpp"
#include "kpigen/dataset.hpp"
#include "kpigen/ddpo.hpp"
#include "kpigen/ddpo_verbal.hpp"
#include "kpigen/io.hpp"
#include "kpigen/metrics.hpp"
#include "kpigen/reward.hpp"
#include "kpigen/seed.hpp"
#include "kpigen/verbalization.hpp"

namespace kpigen::cli {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  return in;
}

fs::path prepare_out_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir + ": " + ec.message());
  return fs::path(dir);
}

void write_output(const fs::path& path, std::string_view contents) {
  try {
    write_file_atomic(path, contents);
  } catch (const std::exception& e) {
    throw IoError(e.what());
  }
}

std::string fmt_double(double v) {
  std::ostringstream os;
  os << std::setprecision(std::numeric_limits<double>::max_digits10) << v;
  return os.str();
}

// Per-run audit record written next to the command's outputs.
struct Manifest {
  explicit Manifest(std::string name) : command(std::move(name)) {}

  std::string command;
  ordered_json config = ordered_json::object();
  std::vector<std::string> inputs;
  std::optional<std::uint64_t> seed;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

  void write(const fs::path& dir) const {
    ordered_json j;
    j["command"] = command;
    j["config"] = config;
    ordered_json digests = ordered_json::object();
    for (const auto& p : inputs) digests[p] = sha256_file(p);
    j["inputs"] = digests;
    j["seed"] = seed ? ordered_json(*seed) : ordered_json(nullptr);
    j["version"] = kVersion;
    j["duration_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    write_output(dir / (command + ".manifest.json"), j.dump(2) + "\n");
  }
};

ValidationMode parse_mode(const std::string& s) {
  if (s == "strict") return ValidationMode::strict;
  if (s == "lenient") return ValidationMode::lenient;
  throw UsageError("mode must be strict or lenient");
}

Schema require_schema(const std::string& s) {
  auto v = parse_schema(s);
  if (!v) throw UsageError("unknown schema \"" + s + "\"");
  return *v;
}

std::vector<MediaRecord> load_records(const std::string& path, ValidationMode mode) {
  auto in = open_input(path);
  return read_media_records(in, mode);
}

// "fixed:P", "keyword:WORD:HIT:MISS" or "length:N:LONG:SHORT".
MockBackend parse_mock_rule(const std::string& spec) {
  std::vector<std::string> parts;
  std::stringstream ss(spec);
  for (std::string p; std::getline(ss, p, ':');) parts.push_back(p);
  try {
    if (parts.size() == 2 && parts[0] == "fixed") return MockBackend::fixed(std::stod(parts[1]));
    if (parts.size() == 4 && parts[0] == "keyword") {
      return MockBackend::keyword(parts[1], std::stod(parts[2]), std::stod(parts[3]));
    }
    if (parts.size() == 4 && parts[0] == "length") {
      return MockBackend::length_keyed(std::stoul(parts[1]), std::stod(parts[2]), std::stod(parts[3]));
    }
  } catch (const std::logic_error&) {
  }
  throw UsageError("bad mock rule \"" + spec + "\" (fixed:P | keyword:WORD:HIT:MISS | length:N:LONG:SHORT)");
}

// ---------------------------------------------------------------------------

int cmd_validate(const std::string& path, const std::string& mode_name, const std::string& out_dir,
                 std::ostream& out) {
  Manifest m{"validate"};
  const ValidationMode mode = parse_mode(mode_name);
  m.config["mode"] = mode_name;
  m.inputs.push_back(path);
  auto in = open_input(path);
  const auto entries = read_verbalization_corpus(in, mode);

  std::ostringstream report;
  std::size_t errors = 0, repairs = 0;
  for (const auto& e : entries) {
    report << e.id << '\t';
    if (!e.value) {
      ++errors;
      report << "error\t" << e.error << '\n';
    } else if (!e.repairs.empty()) {
      repairs += e.repairs.size();
      report << "repaired";
      for (const auto& r : e.repairs) report << '\t' << r;
      report << '\n';
    } else {
      report << "ok\n";
    }
  }
  report << "records " << entries.size() << ", errors " << errors << ", repairs " << repairs << '\n';
  out << report.str();
  if (!out_dir.empty()) {
    const auto dir = prepare_out_dir(out_dir);
    write_output(dir / "validation.tsv", report.str());
    m.write(dir);
  }
  return errors == 0 ? kOk : kDomainError;
}

struct ScoreArgs {
  std::string gt, pred, vectors, rgb, resolution, out_dir;
  double tau = kSimilarityThreshold;
  double rgb_tau = kRgbDistanceThreshold;
  unsigned threads = 1;
};

int cmd_score(const ScoreArgs& a, std::ostream& out) {
  Manifest m{"score"};
  m.inputs = {a.gt, a.pred};
  m.config["similarity_tau"] = a.tau;
  m.config["rgb_tau"] = a.rgb_tau;
  m.config["threads"] = a.threads;

  std::unique_ptr<WordSimilarityProvider> provider;
  if (a.vectors.empty()) {
    provider = std::make_unique<OneHotProvider>();
    m.config["vectors"] = "one-hot";
  } else {
    open_input(a.vectors);
    provider = std::make_unique<VectorTableProvider>(VectorTableProvider::load_file(a.vectors));
    m.inputs.push_back(a.vectors);
    m.config["vectors"] = a.vectors;
  }
  RgbTable table = RgbTable::bundled();
  if (!a.rgb.empty()) {
    open_input(a.rgb);
    table = RgbTable::load_file(a.rgb);
    m.inputs.push_back(a.rgb);
  }
  std::optional<Resolution> fallback;
  if (!a.resolution.empty()) {
    Resolution r;
    char x = 0;
    std::istringstream rs(a.resolution);
    if (!(rs >> r.width >> x >> r.height) || x != 'x' || r.width <= 0 || r.height <= 0) {
      throw UsageError("--resolution must look like 5760x3840");
    }
    fallback = r;
    m.config["resolution"] = a.resolution;
  }

  auto read = [](const std::string& path) {
    auto in = open_input(path);
    return read_verbalization_corpus(in, ValidationMode::strict);
  };
  const auto gt = read(a.gt);
  const auto pred = read(a.pred);
  for (const auto* corpus : {&gt, &pred}) {
    for (const auto& e : *corpus) {
      if (!e.value) throw DatasetError("record " + e.id + ": " + e.error);
    }
  }

  std::map<std::string, const CorpusEntry*> pred_by_id;
  for (const auto& e : pred) {
    if (!pred_by_id.emplace(e.id, &e).second) throw DatasetError("duplicate id " + e.id + " in " + a.pred);
  }
  std::vector<std::string> unmatched;
  std::map<std::string, bool> gt_ids;
  for (const auto& e : gt) {
    gt_ids[e.id] = true;
    if (!pred_by_id.count(e.id)) unmatched.push_back("gt:" + e.id);
  }
  for (const auto& e : pred) {
    if (!gt_ids.count(e.id)) unmatched.push_back("pred:" + e.id);
  }
  if (!unmatched.empty()) {
    std::string list;
    for (const auto& u : unmatched) list += (list.empty() ? "" : ", ") + u;
    throw DatasetError("unmatched ids: " + list);
  }

  std::vector<ScoredPair> pairs;
  std::vector<std::string> ids;
  for (const auto& e : gt) {
    const auto res = e.resolution ? e.resolution : fallback;
    if (!res) throw DatasetError("record " + e.id + " has no resolution; pass --resolution");
    pairs.push_back({&*e.value, &*pred_by_id.at(e.id)->value, *res});
    ids.push_back(e.id);
  }
  const auto summary = score_corpus(pairs, *provider, table, {a.tau, a.rgb_tau}, a.threads);
  std::ostringstream csv;
  write_report_csv(csv, ids, summary);

  const auto dir = prepare_out_dir(a.out_dir);
  write_output(dir / "metrics.csv", csv.str());
  m.write(dir);
  out << "scored " << pairs.size() << " pairs -> " << (dir / "metrics.csv").string() << '\n';
  return kOk;
}

struct BucketArgs {
  std::string records, table, mapping, scheme = "twitter", kpi, mode = "strict", out_dir;
  double high = 90.0, low = 60.0;
  char delimiter = ',';
};

int cmd_bucket(const BucketArgs& a, std::ostream& out) {
  Manifest m{"bucket"};
  if (a.records.empty() == a.table.empty()) throw UsageError("pass exactly one of --records or --table");
  const ValidationMode mode = parse_mode(a.mode);
  std::vector<MediaRecord> records;
  if (!a.records.empty()) {
    records = load_records(a.records, mode);
    m.inputs.push_back(a.records);
  } else {
    ColumnMapping mapping;
    if (!a.mapping.empty()) {
      auto in = open_input(a.mapping);
      mapping = read_column_mapping(in);
      m.inputs.push_back(a.mapping);
    }
    auto in = open_input(a.table);
    records = read_media_table(in, mapping, a.delimiter, mode);
    m.inputs.push_back(a.table);
  }
  BucketScheme scheme;
  if (a.scheme == "twitter") {
    scheme = BucketScheme::twitter(a.high, a.low);
  } else if (a.scheme == "stock") {
    scheme = BucketScheme::stock();
  } else {
    throw UsageError("scheme must be twitter or stock");
  }
  m.config["scheme"] = a.scheme;
  m.config["kpi"] = a.kpi;
  if (a.scheme == "twitter") {
    m.config["high_percentile"] = a.high;
    m.config["low_percentile"] = a.low;
  }

  const auto result = bucket(records, scheme, a.kpi);
  std::ostringstream csv;
  write_bucket_csv(csv, records, result, a.kpi);
  const auto dir = prepare_out_dir(a.out_dir);
  write_output(dir / "buckets.csv", csv.str());
  m.write(dir);

  for (const auto& [label, n] : result.counts) {
    out << bucket_name(label) << '\t' << n << '\t' << fmt_double(result.mean_kpi.at(label)) << '\n';
  }
  for (const auto& acc : result.small_accounts) out << "unlabeled account\t" << acc << '\n';
  return kOk;
}

int cmd_split(const std::string& buckets_path, std::size_t per_bucket, std::uint64_t seed, const std::string& out_dir,
              std::ostream& out) {
  Manifest m{"split"};
  m.inputs.push_back(buckets_path);
  m.seed = seed;
  m.config["test_per_bucket"] = per_bucket;
  auto in = open_input(buckets_path);
  const auto rows = read_csv(in);
  if (rows.empty() || rows[0].size() < 4 || rows[0][0] != "id" || rows[0][3] != "label") {
    throw DatasetError(buckets_path + " is not a bucket file (id,account,kpi,label)");
  }
  std::map<std::string, BucketLabel> labels;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].size() < 4 || rows[i][3].empty()) continue;
    const auto label = parse_bucket(rows[i][3]);
    if (!label) throw DatasetError("unknown bucket label \"" + rows[i][3] + "\"");
    labels[rows[i][0]] = *label;
  }
  const Split s = split(labels, per_bucket, seed);
  std::ostringstream csv;
  csv << "id,split\n";
  std::vector<std::pair<std::string, std::string>> all;
  for (const auto& id : s.train) all.emplace_back(id, "train");
  for (const auto& id : s.test) all.emplace_back(id, "test");
  std::sort(all.begin(), all.end());
  for (const auto& [id, part] : all) csv << csv_field(id) << ',' << part << '\n';
  const auto dir = prepare_out_dir(out_dir);
  write_output(dir / "split.csv", csv.str());
  m.write(dir);
  out << "train " << s.train.size() << ", test " << s.test.size() << '\n';
  return kOk;
}

struct BuildArgs {
  std::string records, schema = "stock", mix = "1,0,0,0", mode = "strict", out_dir;
  std::uint64_t seed = 0;
  double noise = 0.2;
  double token_budget = 2048.0;
};

int cmd_build(const BuildArgs& a, std::ostream& out) {
  Manifest m{"build-instructions"};
  m.inputs.push_back(a.records);
  m.seed = a.seed;
  CorpusOptions opt;
  opt.schema = require_schema(a.schema);
  opt.token_budget = a.token_budget;
  opt.noise.fraction = a.noise;
  {
    std::stringstream ss(a.mix);
    std::size_t i = 0;
    for (std::string part; std::getline(ss, part, ',');) {
      if (i >= 4) throw UsageError("--mix needs four comma-separated weights");
      try {
        opt.mix[i++] = std::stod(part);
      } catch (const std::logic_error&) {
        throw UsageError("bad --mix weight \"" + part + "\"");
      }
    }
    if (i != 4) throw UsageError("--mix needs four comma-separated weights");
  }
  m.config["schema"] = a.schema;
  m.config["mix"] = a.mix;
  m.config["noise_fraction"] = a.noise;
  m.config["token_budget"] = a.token_budget;

  const auto records = load_records(a.records, parse_mode(a.mode));
  const auto result = build_corpus(records, opt, a.seed);

  std::ostringstream pairs, listings, excluded;
  write_pairs(pairs, result.pairs);
  for (std::size_t i = 0; i < result.pairs.size(); ++i) {
    if (i) listings << '\n';
    listings << listing_text(result.pairs[i]);
  }
  excluded << "id,pattern,reason\n";
  for (const auto& e : result.excluded) {
    excluded << csv_field(e.id) << ',' << pattern_name(e.pattern) << ',' << csv_field(e.reason) << '\n';
  }
  const auto dir = prepare_out_dir(a.out_dir);
  write_output(dir / "pairs.jsonl", pairs.str());
  write_output(dir / "listings.txt", listings.str());
  write_output(dir / "excluded.csv", excluded.str());
  m.write(dir);
  out << "pairs " << result.pairs.size() << ", excluded " << result.excluded.size() << '\n';
  return kOk;
}

struct RewardArgs {
  std::string records, mock, backend_url, transform = "sum_prob", schema = "stock", out_dir;
  std::vector<std::string> targets;
  std::size_t best_of = 0;
  unsigned max_in_flight = 4;
  int retries = 3;
};

int cmd_reward(const RewardArgs& a, std::ostream& out, std::ostream& err) {
  Manifest m{"reward"};
  m.inputs.push_back(a.records);
  RewardOptions opt;
  try {
    opt.transform = ScoreTransform::parse(a.transform);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  opt.max_in_flight = std::max(1u, a.max_in_flight);
  opt.retry.attempts = std::max(1, a.retries);
  opt.warn = [&err](const std::string& msg) { err << "warning: " << msg << '\n'; };
  const Schema schema = require_schema(a.schema);
  m.config["transform"] = a.transform;
  m.config["schema"] = a.schema;
  m.config["max_in_flight"] = opt.max_in_flight;
  m.config["retries"] = opt.retry.attempts;

  std::unique_ptr<LogitBackend> backend;
  if (!a.mock.empty()) {
    backend = std::make_unique<MockBackend>(parse_mock_rule(a.mock));
    m.config["backend"] = "mock:" + a.mock;
  } else {
    std::string url = a.backend_url;
    if (url.empty()) {
      if (const char* env = std::getenv(kBackendEnv)) url = env;
    }
    if (url.empty()) throw UsageError(std::string("pass --mock or --backend-url (or set ") + kBackendEnv + ")");
    backend = std::make_unique<HttpBackend>(url);
    m.config["backend"] = url;
  }

  std::optional<KpiMap> targets;
  if (!a.targets.empty()) {
    KpiMap t;
    for (const auto& kv : a.targets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw UsageError("--target expects name=value");
      try {
        t[kv.substr(0, eq)] = std::stoll(kv.substr(eq + 1));
      } catch (const std::logic_error&) {
        throw UsageError("bad --target value in \"" + kv + "\"");
      }
    }
    targets = t;
    ordered_json tj = ordered_json::object();
    for (const auto& [k, v] : t) tj[k] = v;
    m.config["targets"] = tj;
  } else {
    m.config["targets"] = "record kpis";
  }

  const auto records = load_records(a.records, ValidationMode::strict);
  std::vector<RewardRequest> reqs;
  std::vector<std::string> groups;
  for (const auto& r : records) {
    if (!r.verbalization) throw DatasetError("record " + r.id + " has no verbalization to score");
    RewardRequest q;
    q.id = r.id;
    q.prompt = r;
    q.schema = schema;
    q.target_kpis = targets ? *targets : r.kpis;
    q.verbalization = *r.verbalization;
    reqs.push_back(std::move(q));
    groups.push_back(r.media_group.empty() ? r.id : r.media_group);
  }
  if (reqs.empty()) throw DatasetError("no records to score");
  const auto rewards = batch_reward(reqs, *backend, opt);

  std::ostringstream csv;
  if (a.best_of == 0) {
    csv << "id,group,reward\n";
    for (std::size_t i = 0; i < reqs.size(); ++i) {
      csv << csv_field(reqs[i].id) << ',' << csv_field(groups[i]) << ',' << fmt_double(rewards[i]) << '\n';
    }
  } else {
    m.config["best_of"] = a.best_of;
    // Groups in order of first appearance; candidates keep input order.
    std::vector<std::string> order;
    std::map<std::string, std::vector<std::size_t>> members;
    for (std::size_t i = 0; i < groups.size(); ++i) {
      auto& v = members[groups[i]];
      if (v.empty()) order.push_back(groups[i]);
      v.push_back(i);
    }
    csv << "group,rank,id,reward\n";
    for (const auto& g : order) {
      const auto& idx = members[g];
      std::vector<double> rs;
      for (auto i : idx) rs.push_back(rewards[i]);
      const auto top = top_k(rs, std::min(a.best_of, rs.size()));
      for (std::size_t k = 0; k < top.size(); ++k) {
        const auto i = idx[top[k].index];
        csv << csv_field(g) << ',' << k + 1 << ',' << csv_field(reqs[i].id) << ',' << fmt_double(top[k].reward)
            << '\n';
      }
    }
  }
  const auto dir = prepare_out_dir(a.out_dir);
  write_output(dir / "rewards.csv", csv.str());
  m.write(dir);
  out << "scored " << reqs.size() << " candidates\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// ddpo-train

struct TrainSetup {
  std::string task = "quadratic";
  std::string policy = "affine";
  std::size_t hidden = 16;
  std::size_t dim = 2;
  int horizon = 5;
  double sigma = 0.1;
  std::size_t window = 10;
  std::string mock = "keyword:Red:0.9:0.1";
  std::string target_color = "Red";
  ddpo::TrainerConfig trainer;
};

void apply_config_line(TrainSetup& s, const std::string& key, const std::string& value) {
  auto num = [&]() {
    try {
      std::size_t used = 0;
      const double v = std::stod(value, &used);
      if (used != value.size()) throw std::invalid_argument(value);
      return v;
    } catch (const std::logic_error&) {
      throw UsageError("config key " + key + ": bad number \"" + value + "\"");
    }
  };
  auto count = [&]() {
    const double v = num();
    if (v < 0 || v != std::floor(v)) throw UsageError("config key " + key + " must be a nonnegative integer");
    return static_cast<std::size_t>(v);
  };
  if (key == "task") s.task = value;
  else if (key == "policy") s.policy = value;
  else if (key == "hidden") s.hidden = count();
  else if (key == "dim") s.dim = count();
  else if (key == "horizon") s.horizon = static_cast<int>(count());
  else if (key == "sigma") s.sigma = num();
  else if (key == "smoothing_window") s.window = count();
  else if (key == "mock") s.mock = value;
  else if (key == "target_color") s.target_color = value;
  else if (key == "batch_size") s.trainer.batch_size = count();
  else if (key == "learning_rate") s.trainer.learning_rate = num();
  else if (key == "clip_epsilon") s.trainer.clip_epsilon = num();
  else if (key == "inner_epochs") s.trainer.inner_epochs = count();
  else if (key == "normalize_advantages") {
    if (value != "true" && value != "false") throw UsageError("normalize_advantages must be true or false");
    s.trainer.normalize_advantages = value == "true";
  } else if (key == "seed") s.trainer.seed = count();
  else if (key == "max_updates") s.trainer.max_updates = count();
  else if (key == "threads") s.trainer.threads = static_cast<unsigned>(count());
  else throw UsageError("unknown config key \"" + key + "\"");
}

// key = value lines; '#' starts a comment.
void read_train_config(const std::string& path, TrainSetup& s) {
  auto in = open_input(path);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto eq = line.find('=');
    auto trim = [](std::string t) {
      const auto b = t.find_first_not_of(" \t\r");
      if (b == std::string::npos) return std::string();
      return t.substr(b, t.find_last_not_of(" \t\r") - b + 1);
    };
    if (trim(line).empty()) continue;
    if (eq == std::string::npos) throw UsageError(path + ":" + std::to_string(lineno) + ": expected key = value");
    apply_config_line(s, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

std::string curve_svg(const std::vector<ddpo::CurvePoint>& curve, std::size_t window) {
  const double w = 720, h = 400, left = 70, right = 20, top = 20, bottom = 50;
  const auto smooth = ddpo::smoothed_rewards(curve, window);
  double lo = smooth.front(), hi = smooth.front();
  for (const auto& p : curve) {
    lo = std::min(lo, p.mean_reward);
    hi = std::max(hi, p.mean_reward);
  }
  if (hi - lo < 1e-12) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double n = static_cast<double>(std::max<std::size_t>(curve.size() - 1, 1));
  auto px = [&](std::size_t i) { return left + (w - left - right) * static_cast<double>(i) / n; };
  auto py = [&](double v) { return top + (h - top - bottom) * (hi - v) / (hi - lo); };
  auto poly = [&](auto value, const char* colour, double width) {
    std::ostringstream os;
    os << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"" << width << "\" points=\"";
    os << std::fixed << std::setprecision(2);
    for (std::size_t i = 0; i < curve.size(); ++i) os << px(i) << ',' << py(value(i)) << ' ';
    os << "\"/>\n";
    return os.str();
  };
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<line x1=\"" << left << "\" y1=\"" << h - bottom << "\" x2=\"" << w - right << "\" y2=\"" << h - bottom
      << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << h - bottom
      << "\" stroke=\"black\"/>\n";
  svg << poly([&](std::size_t i) { return curve[i].mean_reward; }, "#9ecae1", 1);
  svg << poly([&](std::size_t i) { return smooth[i]; }, "#08519c", 2);
  svg << "<text x=\"" << left - 5 << "\" y=\"" << top + 5 << "\" text-anchor=\"end\" font-size=\"12\">"
      << fmt_double(hi).substr(0, 8) << "</text>\n";
  svg << "<text x=\"" << left - 5 << "\" y=\"" << h - bottom << "\" text-anchor=\"end\" font-size=\"12\">"
      << fmt_double(lo).substr(0, 8) << "</text>\n";
  svg << "<text x=\"" << (left + w - right) / 2 << "\" y=\"" << h - 15
      << "\" text-anchor=\"middle\" font-size=\"13\">update (" << curve.size()
      << " total); light: batch mean reward, dark: moving average over " << window << "</text>\n";
  svg << "</svg>\n";
  return svg.str();
}

struct TrainArgs {
  std::string config, out_dir, plot;
  std::optional<double> lr;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> updates;
};

int cmd_ddpo_train(const TrainArgs& a, std::ostream& out) {
  Manifest m{"ddpo-train"};
  TrainSetup s;
  if (!a.config.empty()) {
    read_train_config(a.config, s);
    m.inputs.push_back(a.config);
  }
  if (a.lr) s.trainer.learning_rate = *a.lr;
  if (a.seed) s.trainer.seed = *a.seed;
  if (a.updates) s.trainer.max_updates = *a.updates;
  try {
    s.trainer.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (s.window == 0) throw UsageError("smoothing_window must be positive");
  if (s.trainer.max_updates == 0) throw UsageError("max_updates must be positive");
  m.seed = s.trainer.seed;

  ddpo::DenoisingMdp mdp;
  mdp.horizon = s.horizon;
  mdp.dim = s.dim;
  if (s.task == "quadratic") {
    mdp.context_dim = s.dim;
  } else if (s.task == "verbal") {
    if (s.dim != 2) throw UsageError("the verbal task needs dim = 2");
    mdp.context_dim = 0;
  } else {
    throw UsageError("task must be quadratic or verbal");
  }
  ddpo::GaussianPolicy policy = [&] {
    if (s.policy == "affine") return ddpo::GaussianPolicy::affine(mdp.dim, mdp.context_dim, mdp.horizon, s.sigma);
    if (s.policy == "tanh_mlp") {
      return ddpo::GaussianPolicy::tanh_mlp(mdp.dim, mdp.context_dim, s.hidden, mdp.horizon, s.sigma,
                                            derive_seed(s.trainer.seed, "policy-init"));
    }
    throw UsageError("policy must be affine or tanh_mlp");
  }();

  ordered_json& c = m.config;
  c["task"] = s.task;
  c["policy"] = s.policy;
  if (s.policy == "tanh_mlp") c["hidden"] = s.hidden;
  c["dim"] = s.dim;
  c["horizon"] = s.horizon;
  c["sigma"] = s.sigma;
  c["batch_size"] = s.trainer.batch_size;
  c["learning_rate"] = s.trainer.learning_rate;
  c["clip_epsilon"] = s.trainer.clip_epsilon;
  c["inner_epochs"] = s.trainer.inner_epochs;
  c["normalize_advantages"] = s.trainer.normalize_advantages;
  c["max_updates"] = s.trainer.max_updates;
  c["threads"] = s.trainer.threads;
  c["smoothing_window"] = s.window;

  std::ostringstream summary;
  ddpo::TrainResult result{{}, policy, 0};
  if (s.task == "quadratic") {
    result = ddpo::train(mdp, policy, ddpo::per_trajectory(ddpo::quadratic_reward), s.trainer);
  } else {
    const auto color = parse_color(s.target_color);
    if (!color) throw UsageError("unknown target_color \"" + s.target_color + "\"");
    c["mock"] = s.mock;
    c["target_color"] = s.target_color;
    const MockBackend backend = parse_mock_rule(s.mock);
    const auto eval_seed = derive_seed(s.trainer.seed, "evaluation");
    const double before = ddpo::color_frequency(mdp, policy, ddpo::anchor_featurizer, *color, 1000, eval_seed);
    result = ddpo::train_with_verbal_reward(mdp, policy, ddpo::anchor_featurizer, backend, ddpo::toy_reward_setup(),
                                            s.trainer);
    const double after =
        ddpo::color_frequency(mdp, result.policy, ddpo::anchor_featurizer, *color, 1000, eval_seed);
    summary << s.target_color << " frequency before " << fmt_double(before) << ", after " << fmt_double(after)
            << '\n';
  }

  std::ostringstream curve_csv, checkpoint;
  ddpo::write_curve_csv(curve_csv, result.curve);
  result.policy.save(checkpoint);
  const auto dir = prepare_out_dir(a.out_dir);
  write_output(dir / "curve.csv", curve_csv.str());
  write_output(dir / "policy.txt", checkpoint.str());
  if (!a.plot.empty()) {
    const fs::path plot = fs::path(a.plot).filename();
    if (plot.empty() || plot != fs::path(a.plot)) throw UsageError("--plot takes a file name inside --out-dir");
    write_output(dir / plot, curve_svg(result.curve, s.window));
  }
  m.write(dir);

  const auto smooth = ddpo::smoothed_rewards(result.curve, s.window);
  out << "updates " << result.curve.size() << ", first mean reward " << fmt_double(result.curve.front().mean_reward)
      << ", final smoothed reward " << fmt_double(smooth.back()) << '\n';
  if (result.zero_variance_updates) {
    out << "zero-variance batches (no update applied): " << result.zero_variance_updates << '\n';
  }
  out << summary.str();
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Verbalization metrics, KPI datasets, LLM rewards and toy DDPO training"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  std::string v_path, v_mode = "strict", v_out;
  auto* validate = app.add_subcommand("validate", "Check a verbalization corpus (JSON lines)");
  validate->add_option("corpus", v_path, "Corpus file")->required();
  validate->add_option("--mode", v_mode, "strict or lenient")->check(CLI::IsMember({"strict", "lenient"}));
  validate->add_option("--out-dir", v_out, "Also write validation.tsv and a manifest here");

  ScoreArgs sa;
  auto* score = app.add_subcommand("score", "Metric report for aligned ground-truth and predicted corpora");
  score->add_option("--gt", sa.gt)->required();
  score->add_option("--pred", sa.pred)->required();
  score->add_option("--vectors", sa.vectors, "Word vectors (word v1 .. vd per line); one-hot if absent");
  score->add_option("--rgb", sa.rgb, "RGB overrides (ColorName r g b per line)");
  score->add_option("--resolution", sa.resolution, "WxH for records without one");
  score->add_option("--tau", sa.tau, "Label similarity threshold");
  score->add_option("--rgb-tau", sa.rgb_tau, "RGB distance threshold");
  score->add_option("--threads", sa.threads);
  score->add_option("--out-dir", sa.out_dir)->required();

  BucketArgs ba;
  auto* bucket_cmd = app.add_subcommand("bucket", "Label records High/Medium/Low on one KPI");
  bucket_cmd->add_option("--records", ba.records, "Media records (JSON lines)");
  bucket_cmd->add_option("--table", ba.table, "Delimited table instead of JSON lines");
  bucket_cmd->add_option("--mapping", ba.mapping, "field = column lines for --table");
  bucket_cmd->add_option("--delimiter", ba.delimiter);
  bucket_cmd->add_option("--scheme", ba.scheme)->check(CLI::IsMember({"twitter", "stock"}));
  bucket_cmd->add_option("--kpi", ba.kpi)->required();
  bucket_cmd->add_option("--high", ba.high, "High percentile (twitter)");
  bucket_cmd->add_option("--low", ba.low, "Low percentile (twitter)");
  bucket_cmd->add_option("--mode", ba.mode)->check(CLI::IsMember({"strict", "lenient"}));
  bucket_cmd->add_option("--out-dir", ba.out_dir)->required();

  std::string sp_buckets, sp_out;
  std::size_t sp_n = 0;
  std::uint64_t sp_seed = 0;
  auto* split_cmd = app.add_subcommand("split", "Sample a per-bucket test set");
  split_cmd->add_option("--buckets", sp_buckets, "buckets.csv from the bucket command")->required();
  split_cmd->add_option("--test-per-bucket", sp_n)->required();
  split_cmd->add_option("--seed", sp_seed);
  split_cmd->add_option("--out-dir", sp_out)->required();

  BuildArgs bd;
  auto* build = app.add_subcommand("build-instructions", "Render instruction pairs");
  build->add_option("--records", bd.records)->required();
  build->add_option("--schema", bd.schema)->check(CLI::IsMember({"stock", "twitter"}));
  build->add_option("--mix", bd.mix, "Pattern weights P1,P2,P3,P4");
  build->add_option("--seed", bd.seed);
  build->add_option("--noise", bd.noise, "Noise fraction for P2/P3");
  build->add_option("--token-budget", bd.token_budget);
  build->add_option("--mode", bd.mode)->check(CLI::IsMember({"strict", "lenient"}));
  build->add_option("--out-dir", bd.out_dir)->required();

  RewardArgs ra;
  auto* reward = app.add_subcommand("reward", "Score candidate verbalizations with a logit backend");
  reward->add_option("--records", ra.records, "Candidates as media records; media_group groups candidates")
      ->required();
  auto* mock_opt = reward->add_option("--mock", ra.mock, "fixed:P | keyword:WORD:HIT:MISS | length:N:LONG:SHORT");
  reward->add_option("--backend-url", ra.backend_url)->excludes(mock_opt);
  reward->add_option("--transform", ra.transform, "sum_prob | sum_logprob | thresholded:C | affine:A:B[:sum_logprob]");
  reward->add_option("--best-of", ra.best_of, "Keep the top k per group");
  reward->add_option("--target", ra.targets, "KPI target name=value (default: the record's KPIs)");
  reward->add_option("--schema", ra.schema)->check(CLI::IsMember({"stock", "twitter"}));
  reward->add_option("--max-in-flight", ra.max_in_flight);
  reward->add_option("--retries", ra.retries);
  reward->add_option("--out-dir", ra.out_dir)->required();

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("ddpo-train", "Train a toy denoising policy");
  train_cmd->add_option("--config", ta.config, "key = value file of trainer settings");
  train_cmd->add_option("--lr", ta.lr);
  train_cmd->add_option("--seed", ta.seed);
  train_cmd->add_option("--updates", ta.updates);
  train_cmd->add_option("--plot", ta.plot, "SVG file name for the reward curve");
  train_cmd->add_option("--out-dir", ta.out_dir)->required();

  std::vector<const char*> argv{"kpigen"};
  for (const auto& s : args) argv.push_back(s.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsageError;
  }

  try {
    if (*validate) return cmd_validate(v_path, v_mode, v_out, out);
    if (*score) return cmd_score(sa, out);
    if (*bucket_cmd) return cmd_bucket(ba, out);
    if (*split_cmd) return cmd_split(sp_buckets, sp_n, sp_seed, sp_out, out);
    if (*build) return cmd_build(bd, out);
    if (*reward) return cmd_reward(ra, out, err);
    if (*train_cmd) return cmd_ddpo_train(ta, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsageError;
  } catch (const BackendError& e) {
    err << "backend error: " << e.what() << '\n';
    return kBackendError;
  } catch (const IoError& e) {
    err << "io error: " << e.what() << '\n';
    return kBackendError;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "io error: " << e.what() << '\n';
    return kBackendError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kDomainError;
  }
  return kUsageError;
}

}  // namespace kpigen::cli
