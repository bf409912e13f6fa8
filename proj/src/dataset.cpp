#include "kpigen/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "kpigen/seed.hpp"

namespace kpigen {

namespace {

// A post: one or more records that share KPI credit.
struct Unit {
  std::vector<std::size_t> members;
  double value = 0.0;
  std::string key;  // smallest member id, for deterministic ordering
};

std::vector<Unit> build_units(std::span<const MediaRecord> records, const std::vector<std::size_t>& idx,
                              std::string_view kpi_name) {
  std::map<std::string, Unit> by_group;
  std::vector<Unit> singles;
  for (std::size_t i : idx) {
    const auto& r = records[i];
    auto it = r.kpis.find(std::string(kpi_name));
    if (it == r.kpis.end()) throw DatasetError("record " + r.id + " has no KPI \"" + std::string(kpi_name) + "\"");
    if (it->second < 0) throw DatasetError("record " + r.id + " has a negative KPI");
    Unit* u;
    if (r.media_group.empty()) {
      singles.emplace_back();
      u = &singles.back();
    } else {
      u = &by_group[r.media_group];
    }
    u->members.push_back(i);
    u->value += static_cast<double>(it->second);
    if (u->key.empty() || r.id < u->key) u->key = r.id;
  }
  std::vector<Unit> units = std::move(singles);
  for (auto& [g, u] : by_group) units.push_back(std::move(u));
  for (auto& u : units) u.value /= static_cast<double>(u.members.size());
  std::sort(units.begin(), units.end(), [](const Unit& a, const Unit& b) {
    return a.value != b.value ? a.value < b.value : a.key < b.key;
  });
  return units;
}

// Moves a boundary position so that no run of equal values straddles it,
// preferring the lower position (ties go to the higher bucket) when both
// neighbours are equally far.
std::size_t tie_respecting(const std::vector<Unit>& units, std::size_t pos) {
  const std::size_t n = units.size();
  auto valid = [&](std::size_t p) { return p == 0 || p == n || units[p - 1].value < units[p].value; };
  if (valid(pos)) return pos;
  std::size_t down = pos, up = pos;
  while (!valid(down)) --down;
  while (!valid(up)) ++up;
  return (pos - down <= up - pos) ? down : up;
}

// Lowest position whose value equals the value at `pos`.
std::size_t run_start(const std::vector<Unit>& units, std::size_t pos) {
  while (pos > 0 && pos < units.size() && units[pos - 1].value == units[pos].value) --pos;
  return pos;
}

void assign(const std::vector<Unit>& units, std::size_t begin, std::size_t end, BucketLabel label,
            std::span<const MediaRecord> records, BucketResult& out) {
  for (std::size_t u = begin; u < end; ++u) {
    for (std::size_t i : units[u].members) out.labels[records[i].id] = label;
  }
}

void bucket_twitter(std::span<const MediaRecord> records, const BucketScheme& scheme, std::string_view kpi_name,
                    BucketResult& out) {
  std::map<std::string, std::vector<std::size_t>> by_account;
  for (std::size_t i = 0; i < records.size(); ++i) by_account[records[i].account].push_back(i);
  for (const auto& [account, idx] : by_account) {
    const auto units = build_units(records, idx, kpi_name);
    const std::size_t n = units.size();
    if (n < 2) {
      out.small_accounts.push_back(account);
      continue;
    }
    const auto rank = [n](double pct) {
      return static_cast<std::size_t>(std::ceil(pct * static_cast<double>(n) / 100.0));
    };
    // Ties across a boundary move up: start the upper side at the first unit
    // equal to the boundary value.
    const std::size_t low_end = run_start(units, std::min(rank(scheme.low_percentile), n));
    const std::size_t high_begin = run_start(units, std::min(rank(scheme.high_percentile), n));
    assign(units, 0, low_end, BucketLabel::Low, records, out);
    assign(units, high_begin, n, BucketLabel::High, records, out);
  }
}

void bucket_stock(std::span<const MediaRecord> records, std::string_view kpi_name, BucketResult& out) {
  std::vector<std::size_t> idx(records.size());
  std::iota(idx.begin(), idx.end(), 0);
  const auto units = build_units(records, idx, kpi_name);
  const std::size_t n = units.size();
  const auto ideal = [n](double frac) { return static_cast<std::size_t>(std::llround(frac * static_cast<double>(n))); };
  const std::size_t b1 = tie_respecting(units, ideal(1.0 / 3.0));
  const std::size_t b2 = std::max(b1, tie_respecting(units, ideal(2.0 / 3.0)));
  assign(units, 0, b1, BucketLabel::Low, records, out);
  assign(units, b1, b2, BucketLabel::Medium, records, out);
  assign(units, b2, n, BucketLabel::High, records, out);
}

}  // namespace

std::string_view bucket_name(BucketLabel l) {
  switch (l) {
    case BucketLabel::High: return "High";
    case BucketLabel::Medium: return "Medium";
    case BucketLabel::Low: return "Low";
  }
  return "";
}

std::optional<BucketLabel> parse_bucket(std::string_view s) {
  for (auto l : {BucketLabel::High, BucketLabel::Medium, BucketLabel::Low}) {
    if (bucket_name(l) == s) return l;
  }
  return std::nullopt;
}

BucketResult bucket(std::span<const MediaRecord> records, const BucketScheme& scheme, std::string_view kpi_name) {
  if (records.empty()) throw DatasetError("no records to bucket");
  if (scheme.kind == BucketScheme::Kind::twitter_two_way) {
    const bool ok = scheme.high_percentile > 0.0 && scheme.high_percentile < 100.0 && scheme.low_percentile > 0.0 &&
                    scheme.low_percentile < 100.0 && scheme.high_percentile > scheme.low_percentile;
    if (!ok) throw DatasetError("percentile bounds must satisfy 0 < low < high < 100");
  }

  BucketResult out;
  if (scheme.kind == BucketScheme::Kind::twitter_two_way) {
    bucket_twitter(records, scheme, kpi_name, out);
  } else {
    bucket_stock(records, kpi_name, out);
  }

  std::map<BucketLabel, double> sums;
  for (const auto& r : records) {
    auto it = out.labels.find(r.id);
    if (it == out.labels.end()) continue;
    ++out.counts[it->second];
    sums[it->second] += static_cast<double>(r.kpis.at(std::string(kpi_name)));
  }
  for (const auto& [label, sum] : sums) out.mean_kpi[label] = sum / static_cast<double>(out.counts[label]);
  return out;
}

Split split(const std::map<std::string, BucketLabel>& labels, std::size_t test_per_bucket, std::uint64_t seed) {
  std::map<BucketLabel, std::vector<std::string>> buckets;
  for (const auto& [id, label] : labels) buckets[label].push_back(id);  // ids arrive sorted

  Split out;
  for (auto& [label, ids] : buckets) {
    if (ids.size() < test_per_bucket) {
      throw DatasetError("bucket " + std::string(bucket_name(label)) + " has " + std::to_string(ids.size()) +
                         " records, fewer than the " + std::to_string(test_per_bucket) + " requested for test");
    }
    std::mt19937_64 rng(derive_seed(seed, bucket_name(label)));
    // Partial Fisher-Yates: the first test_per_bucket slots are a uniform sample.
    for (std::size_t i = 0; i < test_per_bucket; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, ids.size() - 1);
      std::swap(ids[i], ids[pick(rng)]);
    }
    out.test.insert(out.test.end(), ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(test_per_bucket));
    out.train.insert(out.train.end(), ids.begin() + static_cast<std::ptrdiff_t>(test_per_bucket), ids.end());
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

KpiMap inject_noise(const KpiMap& kpis, const NoiseOptions& options, std::uint64_t seed) {
  const double f = options.fraction;
  if (!(f >= 0.0 && f < 1.0)) throw std::invalid_argument("noise fraction must lie in [0, 1)");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  KpiMap out;
  for (const auto& [name, v] : kpis) {
    const double u = unit(rng);
    double noisy;
    if (options.model == NoiseOptions::Model::multiplicative) {
      noisy = static_cast<double>(v) * (1.0 + f * u);
    } else {
      noisy = static_cast<double>(v) + f * options.absolute_scale * u;
    }
    out[name] = std::max<std::int64_t>(0, std::llround(noisy));
  }
  return out;
}

KpiMap inject_noise(const KpiMap& kpis, double fraction, std::uint64_t seed) {
  NoiseOptions o;
  o.fraction = fraction;
  return inject_noise(kpis, o, seed);
}

InstructionPair build_instruction(const MediaRecord& record, Pattern pattern, Schema schema, std::uint64_t seed,
                                  const NoiseOptions& noise) {
  KpiMap shown;
  for (std::string_view k : schema_kpis(schema)) {
    auto it = record.kpis.find(std::string(k));
    if (it == record.kpis.end()) throw DatasetError("record " + record.id + " has no KPI \"" + std::string(k) + "\"");
    shown.insert(*it);
  }
  if (pattern == Pattern::P2 || pattern == Pattern::P3) shown = inject_noise(shown, noise, seed);
  InstructionPair pair = render_instruction(record, pattern, schema, shown);
  pair.noise_seed = seed;
  return pair;
}

double estimate_tokens(std::string_view text) {
  std::size_t words = 0;
  bool in_word = false;
  for (char c : text) {
    const bool space = std::isspace(static_cast<unsigned char>(c)) != 0;
    if (!space && !in_word) ++words;
    in_word = !space;
  }
  return 1.3 * static_cast<double>(words);
}

CorpusResult build_corpus(std::span<const MediaRecord> records, const CorpusOptions& options, std::uint64_t seed) {
  if (records.empty()) throw DatasetError("no records to build instructions from");
  double total = 0.0;
  for (double m : options.mix) {
    if (m < 0.0) throw DatasetError("pattern proportions must be nonnegative");
    total += m;
  }
  if (std::fabs(total - 1.0) > 1e-9) throw DatasetError("pattern proportions must sum to 1");

  // Largest-remainder allocation of pattern counts.
  const std::size_t n = records.size();
  std::array<std::size_t, 4> counts{};
  std::array<double, 4> remainder{};
  std::size_t assigned = 0;
  for (std::size_t p = 0; p < 4; ++p) {
    const double exact = options.mix[p] * static_cast<double>(n);
    counts[p] = static_cast<std::size_t>(std::floor(exact));
    remainder[p] = exact - static_cast<double>(counts[p]);
    assigned += counts[p];
  }
  std::array<std::size_t, 4> order{0, 1, 2, 3};
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t k = 0; assigned < n; ++k, ++assigned) ++counts[order[k % 4]];

  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(derive_seed(seed, "pattern-assignment"));
  std::shuffle(perm.begin(), perm.end(), rng);

  CorpusResult out;
  std::size_t cursor = 0;
  for (std::size_t p = 0; p < 4; ++p) {
    const auto pattern = static_cast<Pattern>(p);
    for (std::size_t k = 0; k < counts[p]; ++k, ++cursor) {
      const std::size_t i = perm[cursor];
      const MediaRecord& r = records[i];
      if ((pattern == Pattern::P1 || pattern == Pattern::P2) && !r.verbalization) {
        out.excluded.push_back({r.id, pattern, "no verbalization"});
        continue;
      }
      InstructionPair pair;
      try {
        pair = build_instruction(r, pattern, options.schema, derive_seed(seed, i), options.noise);
      } catch (const DatasetError& e) {
        out.excluded.push_back({r.id, pattern, e.what()});
        continue;
      }
      const double tokens = estimate_tokens(pair.input_text);
      if (tokens > options.token_budget) {
        out.excluded.push_back({r.id, pattern, "input needs ~" + std::to_string(static_cast<long>(tokens)) +
                                                   " tokens, over the budget"});
        continue;
      }
      out.pairs.push_back(std::move(pair));
    }
  }
  std::sort(out.pairs.begin(), out.pairs.end(), [](const InstructionPair& a, const InstructionPair& b) {
    return a.source_id != b.source_id ? a.source_id < b.source_id : a.pattern < b.pattern;
  });
  return out;
}

}  // namespace kpigen
