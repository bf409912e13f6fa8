#include "kpigen/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "kpigen/io.hpp"

namespace kpigen {

namespace {

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return dot / std::sqrt(na * nb);
}

template <typename Set>
MetricValue set_iou(const Set& a, const Set& b) {
  std::size_t inter = 0;
  for (const auto& x : a) inter += b.count(x);
  const std::size_t uni = a.size() + b.size() - inter;
  if (uni == 0) return std::nullopt;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

std::set<std::string> object_label_set(const Verbalization& v) {
  std::set<std::string> out;
  for (const auto& o : v.objects) out.insert(normalize_label(o.label));
  return out;
}

std::set<Color> color_set(const Verbalization& v) {
  std::set<Color> out;
  for (const auto& c : v.colors) out.insert(c.color);
  return out;
}

void require_positive(Resolution r) {
  if (r.width <= 0 || r.height <= 0) {
    throw std::invalid_argument("ground-truth resolution must be positive, got " + std::to_string(r.width) + "x" +
                                std::to_string(r.height));
  }
}

// Accumulates sum(term * gate) / sum(gate) over label pairs that clear the
// similarity threshold. `term(i, j, cos)` gives the pair contribution.
template <typename Term>
MetricValue gated_object_mean(const Verbalization& gt, const Verbalization& pred,
                              const WordSimilarityProvider& provider, double tau, PairCounts* counts,
                              Term term) {
  PairCounts local;
  double num = 0.0;
  for (std::size_t i = 0; i < gt.objects.size(); ++i) {
    for (std::size_t j = 0; j < pred.objects.size(); ++j) {
      ++local.total;
      const auto cos = provider.similarity(gt.objects[i].label, pred.objects[j].label);
      if (!cos) {
        ++local.oov;
        continue;
      }
      if (*cos > tau) {
        ++local.qualifying;
        num += term(i, j, *cos);
      }
    }
  }
  if (counts) *counts = local;
  if (local.qualifying == 0) return std::nullopt;
  return num / static_cast<double>(local.qualifying);
}

}  // namespace

std::string normalize_label(std::string_view label) {
  auto first = std::find_if_not(label.begin(), label.end(), [](unsigned char c) { return std::isspace(c); });
  auto last = std::find_if_not(label.rbegin(), label.rend(), [](unsigned char c) { return std::isspace(c); }).base();
  std::string out;
  if (first < last) out.assign(first, last);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::vector<std::string> label_words(std::string_view label) {
  std::vector<std::string> words;
  std::string cur;
  for (char ch : label) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c) || ch == '_') {
      if (!cur.empty()) words.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  return words;
}

// ---------------------------------------------------------------------------
// Providers

VectorTableProvider VectorTableProvider::load(std::istream& in) {
  VectorTableProvider p;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string word;
    if (!(ls >> word)) continue;
    std::vector<double> vec;
    double x;
    while (ls >> x) vec.push_back(x);
    if (!ls.eof()) throw std::runtime_error("word vectors line " + std::to_string(lineno) + ": bad number");
    if (vec.empty()) throw std::runtime_error("word vectors line " + std::to_string(lineno) + ": no components");
    if (p.dim_ != 0 && vec.size() != p.dim_) {
      throw std::runtime_error("word vectors line " + std::to_string(lineno) + ": dimension " +
                               std::to_string(vec.size()) + " != " + std::to_string(p.dim_));
    }
    p.add(std::move(word), std::move(vec));
  }
  return p;
}

VectorTableProvider VectorTableProvider::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open word vectors file " + path);
  return load(in);
}

void VectorTableProvider::add(std::string word, std::vector<double> vec) {
  if (dim_ == 0) dim_ = vec.size();
  if (vec.size() != dim_) throw std::invalid_argument("word vector dimension mismatch for " + word);
  for (char& c : word) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  table_[std::move(word)] = std::move(vec);
}

std::optional<std::vector<double>> VectorTableProvider::embed(std::string_view label) const {
  std::vector<double> sum(dim_, 0.0);
  std::size_t found = 0;
  for (const auto& w : label_words(label)) {
    auto it = table_.find(w);
    if (it == table_.end()) continue;
    for (std::size_t k = 0; k < dim_; ++k) sum[k] += it->second[k];
    ++found;
  }
  if (found == 0) return std::nullopt;
  double norm = 0.0;
  for (double& x : sum) {
    x /= static_cast<double>(found);
    norm += x * x;
  }
  if (norm == 0.0) return std::nullopt;
  return sum;
}

std::optional<double> VectorTableProvider::similarity(std::string_view a, std::string_view b) const {
  const auto va = embed(a);
  const auto vb = embed(b);
  if (!va || !vb) return std::nullopt;
  return std::clamp(cosine(*va, *vb), -1.0, 1.0);
}

std::optional<double> OneHotProvider::similarity(std::string_view a, std::string_view b) const {
  const auto wa = label_words(a);
  const auto wb = label_words(b);
  if (wa.empty() || wb.empty()) return std::nullopt;
  // Mean of one-hot vectors; the 1/n factors cancel in the cosine.
  std::unordered_map<std::string, std::pair<double, double>> counts;
  for (const auto& w : wa) counts[w].first += 1.0;
  for (const auto& w : wb) counts[w].second += 1.0;
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (const auto& [w, c] : counts) {
    dot += c.first * c.second;
    na += c.first * c.first;
    nb += c.second * c.second;
  }
  return std::min(1.0, dot / std::sqrt(na * nb));
}

// ---------------------------------------------------------------------------
// RGB table

const RgbTable& RgbTable::bundled() {
  static const RgbTable table = [] {
    RgbTable t;
    using C = Color;
    t.set(C::Red, {1.0, 0.0, 0.0});
    t.set(C::Dark_Red, {0.545, 0.0, 0.0});
    t.set(C::Green, {0.0, 0.5, 0.0});
    t.set(C::Bright_Green, {0.0, 1.0, 0.0});
    t.set(C::Dark_Green, {0.0, 0.392, 0.0});
    t.set(C::Light_Green, {0.565, 0.933, 0.565});
    t.set(C::Mud_Green, {0.376, 0.4, 0.176});
    t.set(C::Blue, {0.0, 0.0, 1.0});
    t.set(C::Dark_Blue, {0.0, 0.0, 0.545});
    t.set(C::Light_Blue, {0.678, 0.847, 0.902});
    t.set(C::Royal_Blue, {0.255, 0.412, 0.882});
    t.set(C::Black, {0.0, 0.0, 0.0});
    t.set(C::White, {1.0, 1.0, 1.0});
    t.set(C::Off_White, {0.98, 0.976, 0.965});
    t.set(C::Gray, {0.5, 0.5, 0.5});
    t.set(C::Dark_Gray, {0.25, 0.25, 0.25});
    t.set(C::Silver, {0.75, 0.75, 0.75});
    t.set(C::Cream, {1.0, 0.992, 0.816});
    t.set(C::Magenta, {1.0, 0.0, 1.0});
    t.set(C::Cyan, {0.0, 1.0, 1.0});
    t.set(C::Yellow, {1.0, 1.0, 0.0});
    t.set(C::Mustard, {0.882, 0.678, 0.004});
    t.set(C::Khaki, {0.941, 0.902, 0.549});
    t.set(C::Brown, {0.647, 0.165, 0.165});
    t.set(C::Dark_Brown, {0.396, 0.263, 0.129});
    t.set(C::Violet, {0.933, 0.51, 0.933});
    t.set(C::Pink, {1.0, 0.753, 0.796});
    t.set(C::Dark_Pink, {0.906, 0.329, 0.502});
    t.set(C::Maroon, {0.5, 0.0, 0.0});
    t.set(C::Tan, {0.824, 0.706, 0.549});
    t.set(C::Purple, {0.5, 0.0, 0.5});
    t.set(C::Lavender, {0.902, 0.902, 0.98});
    t.set(C::Turquoise, {0.251, 0.878, 0.816});
    t.set(C::Plum, {0.867, 0.627, 0.867});
    t.set(C::Gold, {1.0, 0.843, 0.0});
    t.set(C::Emerald, {0.314, 0.784, 0.471});
    t.set(C::Orange, {1.0, 0.647, 0.0});
    t.set(C::Beige, {0.961, 0.961, 0.863});
    t.set(C::Lilac, {0.784, 0.635, 0.784});
    t.set(C::Olive, {0.5, 0.5, 0.0});
    return t;
  }();
  return table;
}

void RgbTable::set(Color c, Rgb rgb) {
  for (double x : rgb) {
    if (!(x >= 0.0 && x <= 1.0)) throw std::invalid_argument("RGB components must lie in [0, 1]");
  }
  values_[static_cast<std::size_t>(c)] = rgb;
}

RgbTable RgbTable::load(std::istream& in) {
  RgbTable t = bundled();
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string name;
    if (!(ls >> name) || name.front() == '#') continue;
    Rgb rgb{};
    if (!(ls >> rgb[0] >> rgb[1] >> rgb[2])) {
      throw std::runtime_error("RGB table line " + std::to_string(lineno) + ": expected 'ColorName r g b'");
    }
    const auto color = parse_color(name);
    if (!color) throw std::runtime_error("RGB table line " + std::to_string(lineno) + ": unknown color " + name);
    t.set(*color, rgb);
  }
  return t;
}

RgbTable RgbTable::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open RGB table " + path);
  return load(in);
}

// ---------------------------------------------------------------------------
// Metrics

MetricValue colors_iou(const Verbalization& gt, const Verbalization& pred) {
  return set_iou(color_set(gt), color_set(pred));
}

MetricValue colors_similarity(const Verbalization& gt, const Verbalization& pred,
                              const WordSimilarityProvider& provider, double tau, PairCounts* counts) {
  PairCounts local;
  double num = 0.0;
  for (const auto& g : gt.colors) {
    for (const auto& p : pred.colors) {
      ++local.total;
      const auto cos = provider.similarity(color_name(g.color), color_name(p.color));
      if (!cos) {
        ++local.oov;
        continue;
      }
      if (*cos > tau) {
        ++local.qualifying;
        num += *cos;
      }
    }
  }
  if (counts) *counts = local;
  if (local.qualifying == 0) return std::nullopt;
  return num / static_cast<double>(local.qualifying);
}

MetricValue colors_rgb_distance(const Verbalization& gt, const Verbalization& pred, const RgbTable& table,
                                double tau, PairCounts* counts) {
  PairCounts local;
  double num = 0.0;
  for (const auto& g : gt.colors) {
    for (const auto& p : pred.colors) {
      ++local.total;
      const auto& a = table[g.color];
      const auto& b = table[p.color];
      const double d = std::sqrt((a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1]) +
                                 (a[2] - b[2]) * (a[2] - b[2]));
      if (d < tau) {
        ++local.qualifying;
        num += d;
      }
    }
  }
  if (counts) *counts = local;
  if (local.qualifying == 0) return std::nullopt;
  return num / static_cast<double>(local.qualifying);
}

MetricValue colors_coverage_rmse(const Verbalization& gt, const Verbalization& pred) {
  double sq = 0.0;
  std::size_t n = 0;
  for (const auto& g : gt.colors) {
    for (const auto& p : pred.colors) {
      if (g.color != p.color) continue;
      sq += (g.coverage - p.coverage) * (g.coverage - p.coverage);
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return std::sqrt(sq / static_cast<double>(n));
}

MetricValue tones_coverage_rmse(const Verbalization& gt, const Verbalization& pred) {
  double sq = 0.0;
  std::size_t n = 0;
  for (Tone t : kTones) {
    if (!gt.tones.present(t) || !pred.tones.present(t)) continue;
    const double d = gt.tones[t] - pred.tones[t];
    sq += d * d;
    ++n;
  }
  if (n == 0) return std::nullopt;
  return std::sqrt(sq / static_cast<double>(n));
}

MetricValue objects_iou(const Verbalization& gt, const Verbalization& pred) {
  return set_iou(object_label_set(gt), object_label_set(pred));
}

MetricValue objects_similarity(const Verbalization& gt, const Verbalization& pred,
                               const WordSimilarityProvider& provider, double tau, PairCounts* counts) {
  return gated_object_mean(gt, pred, provider, tau, counts, [](std::size_t, std::size_t, double cos) { return cos; });
}

MetricValue objects_area_rmse_norm(const Verbalization& gt, const Verbalization& pred, Resolution gt_resolution,
                                   const WordSimilarityProvider& provider, double tau, PairCounts* counts) {
  require_positive(gt_resolution);
  const double image_area = gt_resolution.area();
  const auto mse = gated_object_mean(gt, pred, provider, tau, counts, [&](std::size_t i, std::size_t j, double cos) {
    const double ag = gt.objects[i].box.area();
    const double ap = pred.objects[j].box.area();
    return (ag - ap) * (ag - ap) * (ag / image_area) / cos;
  });
  if (!mse) return std::nullopt;
  return std::sqrt(*mse) / image_area;
}

MetricValue relative_position_error_norm(const Verbalization& gt, const Verbalization& pred,
                                         Resolution gt_resolution, const WordSimilarityProvider& provider,
                                         double tau, PairCounts* counts) {
  require_positive(gt_resolution);
  const double diagonal = std::hypot(static_cast<double>(gt_resolution.width), static_cast<double>(gt_resolution.height));
  const auto rpe = gated_object_mean(gt, pred, provider, tau, counts, [&](std::size_t i, std::size_t j, double cos) {
    const auto cg = gt.objects[i].box.centroid();
    const auto cp = pred.objects[j].box.centroid();
    return std::hypot(cg[0] - cp[0], cg[1] - cp[1]) / cos;
  });
  if (!rpe) return std::nullopt;
  return *rpe / diagonal;
}

std::string_view metric_name(Metric m) {
  static constexpr std::array<std::string_view, kMetricCount> names{
      "colors_iou",         "colors_similarity",  "colors_rgb_distance",
      "colors_coverage_rmse", "tones_coverage_rmse", "objects_iou",
      "objects_similarity", "objects_area_rmse_norm", "relative_position_error_norm",
  };
  return names[static_cast<std::size_t>(m)];
}

MetricReport full_report(const Verbalization& gt, const Verbalization& pred, Resolution gt_resolution,
                         const WordSimilarityProvider& provider, const RgbTable& table,
                         const MetricOptions& options) {
  MetricReport r;
  PairCounts color_pairs, object_pairs;
  r[Metric::colors_iou] = colors_iou(gt, pred);
  r[Metric::colors_similarity] = colors_similarity(gt, pred, provider, options.similarity_tau, &color_pairs);
  r[Metric::colors_rgb_distance] = colors_rgb_distance(gt, pred, table, options.rgb_tau);
  r[Metric::colors_coverage_rmse] = colors_coverage_rmse(gt, pred);
  r[Metric::tones_coverage_rmse] = tones_coverage_rmse(gt, pred);
  r[Metric::objects_iou] = objects_iou(gt, pred);
  r[Metric::objects_similarity] = objects_similarity(gt, pred, provider, options.similarity_tau, &object_pairs);
  r[Metric::objects_area_rmse_norm] =
      objects_area_rmse_norm(gt, pred, gt_resolution, provider, options.similarity_tau);
  r[Metric::relative_position_error_norm] =
      relative_position_error_norm(gt, pred, gt_resolution, provider, options.similarity_tau);
  r.oov_pairs = color_pairs.oov + object_pairs.oov;
  return r;
}

CorpusSummary score_corpus(const std::vector<ScoredPair>& pairs, const WordSimilarityProvider& provider,
                           const RgbTable& table, const MetricOptions& options, unsigned threads) {
  CorpusSummary s;
  s.rows.resize(pairs.size());
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(pairs.size())));
  auto work = [&](std::size_t begin, std::size_t stride) {
    for (std::size_t i = begin; i < pairs.size(); i += stride) {
      s.rows[i] = full_report(*pairs[i].gt, *pairs[i].pred, pairs[i].gt_resolution, provider, table, options);
    }
  };
  if (threads <= 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(work, t, threads);
    for (auto& th : pool) th.join();
  }

  // Summation in row order keeps the means independent of the thread count.
  for (std::size_t m = 0; m < kMetricCount; ++m) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& row : s.rows) {
      if (row.values[m]) {
        sum += *row.values[m];
        ++n;
      } else {
        ++s.skipped[m];
      }
    }
    if (n > 0) s.means[m] = sum / static_cast<double>(n);
  }
  return s;
}

void write_report_csv(std::ostream& out, const std::vector<std::string>& ids, const CorpusSummary& summary) {
  auto cell = [](const MetricValue& v) -> std::string {
    if (!v) return "";
    std::ostringstream os;
    os << std::setprecision(std::numeric_limits<double>::max_digits10) << *v;
    return os.str();
  };
  out << "id";
  for (std::size_t m = 0; m < kMetricCount; ++m) out << ',' << metric_name(static_cast<Metric>(m));
  out << ",oov_pairs\n";
  for (std::size_t i = 0; i < summary.rows.size(); ++i) {
    out << (i < ids.size() ? csv_field(ids[i]) : std::to_string(i + 1));
    for (const auto& v : summary.rows[i].values) out << ',' << cell(v);
    out << ',' << summary.rows[i].oov_pairs << '\n';
  }
  std::size_t oov = 0;
  for (const auto& r : summary.rows) oov += r.oov_pairs;
  out << "summary";
  for (const auto& v : summary.means) out << ',' << cell(v);
  out << ',' << oov << '\n';
  out << "skipped";
  for (std::size_t n : summary.skipped) out << ',' << n;
  out << ",\n";
}

}  // namespace kpigen
