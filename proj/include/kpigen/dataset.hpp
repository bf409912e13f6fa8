#pragma once

// Media records, KPI bucketing, train/test splitting, behavior noise and the
// four instruction patterns used for behavior fine-tuning.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "kpigen/verbalization.hpp"

namespace kpigen {

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using KpiMap = std::map<std::string, std::int64_t>;

struct MediaRecord {
  std::string id;
  std::string account;
  std::string timestamp;  // ISO-8601; the first 10 characters are the date
  std::string caption;
  std::vector<std::string> keywords;
  Resolution resolution;
  KpiMap kpis;
  std::optional<Verbalization> verbalization;
  std::string media_group;  // records of one post share it; empty = own post

  std::string date() const { return timestamp.substr(0, 10); }
};

// ---------------------------------------------------------------------------
// Bucketing

enum class BucketLabel { High, Medium, Low };

std::string_view bucket_name(BucketLabel l);
std::optional<BucketLabel> parse_bucket(std::string_view s);

struct BucketScheme {
  enum class Kind { twitter_two_way, stock_three_way };

  Kind kind = Kind::twitter_two_way;
  double high_percentile = 90.0;  // twitter: top (100 - high) percent are High
  double low_percentile = 60.0;   // twitter: bottom `low` percent are Low

  static BucketScheme twitter(double high = 90.0, double low = 60.0) {
    return {Kind::twitter_two_way, high, low};
  }
  static BucketScheme stock() { return {Kind::stock_three_way, 90.0, 60.0}; }
};

struct BucketResult {
  std::map<std::string, BucketLabel> labels;    // id -> label; unlabeled ids absent
  std::vector<std::string> small_accounts;      // twitter: accounts with < 2 posts
  std::map<BucketLabel, std::size_t> counts;    // records per label
  std::map<BucketLabel, double> mean_kpi;       // mean record KPI per label
};

// Buckets records on one KPI.
//
// The unit of ranking is the post: records sharing (account, media_group)
// under the twitter scheme, or media_group under the stock scheme, pool
// their KPI (mean) and receive one label. Percentile boundaries use nearest
// rank on the ascending post values: the bottom ceil(low% * N) posts are
// Low and the top N - ceil(high% * N) posts are High, with ties across a
// boundary moved to the higher side. Stock tertile boundaries sit at the
// tie-respecting positions closest to N/3 and 2N/3.
//
// Throws DatasetError for empty input, a record missing the KPI, or invalid
// percentile bounds.
BucketResult bucket(std::span<const MediaRecord> records, const BucketScheme& scheme, std::string_view kpi_name);

// ---------------------------------------------------------------------------
// Splitting

struct Split {
  std::vector<std::string> train;
  std::vector<std::string> test;
};

// Uniformly samples `test_per_bucket` ids without replacement from every
// bucket present in `labels`; the rest go to train. Deterministic under
// `seed`. Throws DatasetError if any bucket is smaller than the request.
Split split(const std::map<std::string, BucketLabel>& labels, std::size_t test_per_bucket, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Behavior noise

struct NoiseOptions {
  enum class Model { multiplicative, additive };

  Model model = Model::multiplicative;
  double fraction = 0.2;
  // additive model only: values move by up to fraction * absolute_scale
  double absolute_scale = 100.0;
};

// Multiplicative: each value v becomes round(v * u) with u ~ U[1 - f, 1 + f],
// drawn independently per KPI in key order. Results are never negative.
// Throws std::invalid_argument unless 0 <= fraction < 1.
KpiMap inject_noise(const KpiMap& kpis, const NoiseOptions& options, std::uint64_t seed);
KpiMap inject_noise(const KpiMap& kpis, double fraction, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Instruction patterns

enum class Pattern { P1, P2, P3, P4 };

std::string_view pattern_name(Pattern p);
std::optional<Pattern> parse_pattern(std::string_view s);

// Dataset family: decides the prompt wording and which KPIs appear.
enum class Schema { stock, twitter };

std::optional<Schema> parse_schema(std::string_view s);
// KPI keys of the family in prompt order.
std::span<const std::string_view> schema_kpis(Schema s);

struct InstructionPair {
  Pattern pattern = Pattern::P1;
  std::string input_text;
  std::string output_text;
  std::string source_id;
  std::uint64_t noise_seed = 0;
};

// Renders a pattern with explicit KPI values for the input side; the output
// side always carries the record's exact KPIs. `input_kpis` is ignored by P4.
// Throws DatasetError when P1/P2 lack a verbalization or a KPI is missing.
InstructionPair render_instruction(const MediaRecord& record, Pattern pattern, Schema schema,
                                   const KpiMap& input_kpis);

// P1 shows exact KPIs, P2/P3 show noisy KPIs drawn with `seed`, P4 none.
InstructionPair build_instruction(const MediaRecord& record, Pattern pattern, Schema schema, std::uint64_t seed,
                                  const NoiseOptions& noise = {});

// "Input: <input>\n\nOutput: <output>\n"
std::string listing_text(const InstructionPair& pair);

// Rough token count: whitespace-separated words times 1.3.
double estimate_tokens(std::string_view text);

struct CorpusOptions {
  std::array<double, 4> mix{1.0, 0.0, 0.0, 0.0};
  Schema schema = Schema::stock;
  double token_budget = 2048.0;
  NoiseOptions noise;
};

struct Exclusion {
  std::string id;
  Pattern pattern;
  std::string reason;
};

struct CorpusResult {
  std::vector<InstructionPair> pairs;  // sorted by (source_id, pattern)
  std::vector<Exclusion> excluded;
};

// Assigns each record one pattern: pattern counts follow `mix` by largest
// remainder over a seeded shuffle. Pairs whose input exceeds the token
// budget, or that need a missing verbalization, are excluded and listed.
// Throws DatasetError for empty input or a mix that does not sum to 1.
CorpusResult build_corpus(std::span<const MediaRecord> records, const CorpusOptions& options, std::uint64_t seed);

// ---------------------------------------------------------------------------
// File formats

// Newline-delimited JSON pair file: pattern, input, output, source_id, seed.
void write_pairs(std::ostream& out, std::span<const InstructionPair> pairs);
std::vector<InstructionPair> read_pairs(std::istream& in);

// MediaRecord as one JSON line:
//   {"id", "account", "timestamp", "caption", "keywords": [...],
//    "resolution": [w, h], "kpis": {...}, "media_group", "verbalization": {...}}
MediaRecord parse_media_record(std::string_view json_line, ValidationMode mode = ValidationMode::strict);
std::string media_record_line(const MediaRecord& r);
std::vector<MediaRecord> read_media_records(std::istream& in, ValidationMode mode = ValidationMode::strict);

// Delimited table ingest. `mapping` maps record fields (id, account,
// timestamp, caption, keywords, width, height, media_group, verbalization,
// kpi.<name>) to column headers; unmapped fields use their own name as the
// header. Keywords are split on commas.
using ColumnMapping = std::map<std::string, std::string>;
ColumnMapping read_column_mapping(std::istream& in);
std::vector<MediaRecord> read_media_table(std::istream& in, const ColumnMapping& mapping, char delimiter = ',',
                                          ValidationMode mode = ValidationMode::strict);

// id,account,kpi,label
void write_bucket_csv(std::ostream& out, std::span<const MediaRecord> records, const BucketResult& result,
                      std::string_view kpi_name);

}  // namespace kpigen
