#pragma once

// Metrics comparing a ground-truth verbalization with a predicted one.
//
// Every metric is either a real value or undefined (zero denominator). The
// undefined case is std::nullopt, never NaN and never a silent 0; corpus
// averages skip it and count the skip.
//
// Similarity-gated metrics sum over every ground-truth x predicted pair
// (no matching) and keep the pairs whose label cosine clears the threshold.

#include <array>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "kpigen/verbalization.hpp"

namespace kpigen {

using MetricValue = std::optional<double>;

inline constexpr double kSimilarityThreshold = 0.7;
inline constexpr double kRgbDistanceThreshold = 0.5;

// Trim + lowercase, used for every label comparison.
std::string normalize_label(std::string_view label);

// Lowercased words of a label; '_' and whitespace both separate words, so
// "Dark_Gray" and "safety vest" are two-word labels.
std::vector<std::string> label_words(std::string_view label);

class WordSimilarityProvider {
 public:
  virtual ~WordSimilarityProvider() = default;

  // Cosine similarity of two labels, or nullopt when either label has no
  // in-vocabulary word.
  virtual std::optional<double> similarity(std::string_view a, std::string_view b) const = 0;
};

// Dense word vectors. A multi-word label embeds as the mean of its
// in-vocabulary word vectors.
class VectorTableProvider : public WordSimilarityProvider {
 public:
  VectorTableProvider() = default;

  // One "word v1 ... vd" line per entry; every line must have the same d.
  static VectorTableProvider load(std::istream& in);
  static VectorTableProvider load_file(const std::string& path);

  void add(std::string word, std::vector<double> vec);
  std::size_t dimension() const { return dim_; }
  std::size_t size() const { return table_.size(); }

  std::optional<std::vector<double>> embed(std::string_view label) const;
  std::optional<double> similarity(std::string_view a, std::string_view b) const override;

 private:
  std::size_t dim_ = 0;
  std::unordered_map<std::string, std::vector<double>> table_;
};

// Every distinct word is its own orthogonal axis: identical labels score 1,
// labels without shared words score 0. The fallback when no vector file is
// supplied.
class OneHotProvider : public WordSimilarityProvider {
 public:
  std::optional<double> similarity(std::string_view a, std::string_view b) const override;
};

// Normalized RGB coordinates in [0, 1]^3 for all 40 colors.
class RgbTable {
 public:
  using Rgb = std::array<double, 3>;

  // Built-in web/X11-derived values.
  static const RgbTable& bundled();
  // Starts from the bundled table and overrides every "ColorName r g b" line.
  static RgbTable load(std::istream& in);
  static RgbTable load_file(const std::string& path);

  const Rgb& operator[](Color c) const { return values_[static_cast<std::size_t>(c)]; }
  void set(Color c, Rgb rgb);

 private:
  std::array<Rgb, kColorCount> values_{};
};

// Pair bookkeeping for gated metrics.
struct PairCounts {
  std::size_t total = 0;       // |G| x |P|
  std::size_t qualifying = 0;  // pairs passing the gate
  std::size_t oov = 0;         // pairs skipped for lack of vectors
};

MetricValue colors_iou(const Verbalization& gt, const Verbalization& pred);
MetricValue colors_similarity(const Verbalization& gt, const Verbalization& pred,
                              const WordSimilarityProvider& provider, double tau = kSimilarityThreshold,
                              PairCounts* counts = nullptr);
MetricValue colors_rgb_distance(const Verbalization& gt, const Verbalization& pred, const RgbTable& table,
                                double tau = kRgbDistanceThreshold, PairCounts* counts = nullptr);
MetricValue colors_coverage_rmse(const Verbalization& gt, const Verbalization& pred);
MetricValue tones_coverage_rmse(const Verbalization& gt, const Verbalization& pred);
MetricValue objects_iou(const Verbalization& gt, const Verbalization& pred);
MetricValue objects_similarity(const Verbalization& gt, const Verbalization& pred,
                               const WordSimilarityProvider& provider, double tau = kSimilarityThreshold,
                               PairCounts* counts = nullptr);
// Throws std::invalid_argument for a non-positive resolution.
MetricValue objects_area_rmse_norm(const Verbalization& gt, const Verbalization& pred, Resolution gt_resolution,
                                   const WordSimilarityProvider& provider, double tau = kSimilarityThreshold,
                                   PairCounts* counts = nullptr);
MetricValue relative_position_error_norm(const Verbalization& gt, const Verbalization& pred,
                                         Resolution gt_resolution, const WordSimilarityProvider& provider,
                                         double tau = kSimilarityThreshold, PairCounts* counts = nullptr);

enum class Metric : std::size_t {
  colors_iou,
  colors_similarity,
  colors_rgb_distance,
  colors_coverage_rmse,
  tones_coverage_rmse,
  objects_iou,
  objects_similarity,
  objects_area_rmse_norm,
  relative_position_error_norm,
};

inline constexpr std::size_t kMetricCount = 9;
std::string_view metric_name(Metric m);

struct MetricReport {
  std::array<MetricValue, kMetricCount> values{};
  std::size_t oov_pairs = 0;  // color + object pairs skipped as out of vocabulary

  const MetricValue& operator[](Metric m) const { return values[static_cast<std::size_t>(m)]; }
  MetricValue& operator[](Metric m) { return values[static_cast<std::size_t>(m)]; }
};

struct MetricOptions {
  double similarity_tau = kSimilarityThreshold;
  double rgb_tau = kRgbDistanceThreshold;
};

MetricReport full_report(const Verbalization& gt, const Verbalization& pred, Resolution gt_resolution,
                         const WordSimilarityProvider& provider, const RgbTable& table,
                         const MetricOptions& options = {});

struct ScoredPair {
  const Verbalization* gt = nullptr;
  const Verbalization* pred = nullptr;
  Resolution gt_resolution;
};

struct CorpusSummary {
  std::vector<MetricReport> rows;
  std::array<MetricValue, kMetricCount> means{};
  std::array<std::size_t, kMetricCount> skipped{};  // undefined entries per metric
};

// Per-pair reports plus per-metric means over defined entries. Pairs are
// evaluated with up to `threads` workers; results do not depend on it.
CorpusSummary score_corpus(const std::vector<ScoredPair>& pairs, const WordSimilarityProvider& provider,
                           const RgbTable& table, const MetricOptions& options = {}, unsigned threads = 1);

// CSV: header, one row per pair (ids supplied by the caller), then a
// "summary" row of means and a "skipped" row of undefined counts. Undefined
// cells are empty.
void write_report_csv(std::ostream& out, const std::vector<std::string>& ids, const CorpusSummary& summary);

}  // namespace kpigen
