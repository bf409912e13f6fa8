#include <doctest.h>

#include <cmath>
#include <sstream>

#include "kpigen/metrics.hpp"
#include "metric_oracle.hpp"
#include "test_support.hpp"

using namespace kpigen;

namespace {

Verbalization colors_only(std::vector<ColorEntry> colors) {
  Verbalization v;
  v.colors = std::move(colors);
  v.tones[Tone::neutral] = 1.0;
  return v;
}

Verbalization objects_only(std::vector<ObjectEntry> objects) {
  Verbalization v;
  v.tones[Tone::neutral] = 1.0;
  v.objects = std::move(objects);
  return v;
}

// Two unit vectors with cosine c.
VectorTableProvider pair_provider(const std::string& a, const std::string& b, double c) {
  VectorTableProvider p;
  p.add(a, {1.0, 0.0});
  p.add(b, {c, std::sqrt(1.0 - c * c)});
  return p;
}

const OneHotProvider kOneHot;

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("label normalization and word splitting") {
  CHECK(normalize_label("  Safety Vest ") == "safety vest");
  CHECK(label_words("Dark_Gray") == std::vector<std::string>{"dark", "gray"});
  CHECK(label_words(" banknote  bill ") == std::vector<std::string>{"banknote", "bill"});
}

TEST_CASE("colors IOU") {
  const auto gb = colors_only({{Color::Gray, 0.5}, {Color::Black, 0.5}});
  CHECK(*colors_iou(gb, gb) == 1.0);
  CHECK(*colors_iou(gb, colors_only({{Color::White, 1.0}})) == 0.0);
  // {Gray, Black} vs {Gray, White}: one shared of three distinct.
  CHECK(*colors_iou(gb, colors_only({{Color::Gray, 0.5}, {Color::White, 0.5}})) == doctest::Approx(1.0 / 3.0));
  CHECK_FALSE(colors_iou(colors_only({}), colors_only({})).has_value());
}

TEST_CASE("colors similarity") {
  const auto gray = colors_only({{Color::Gray, 1.0}});
  CHECK(*colors_similarity(gray, gray, kOneHot) == doctest::Approx(1.0));
  // One-hot vectors of different single words are orthogonal.
  CHECK_FALSE(colors_similarity(gray, colors_only({{Color::Red, 1.0}}), kOneHot).has_value());
  const auto p = pair_provider("red", "maroon", 0.8);
  PairCounts counts;
  const auto s = colors_similarity(colors_only({{Color::Red, 1.0}}), colors_only({{Color::Maroon, 1.0}}), p, 0.7,
                                   &counts);
  CHECK(*s == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(counts.total == 1);
  CHECK(counts.qualifying == 1);
  // Out-of-vocabulary pairs are skipped and counted.
  colors_similarity(colors_only({{Color::Red, 1.0}}), colors_only({{Color::Blue, 1.0}}), p, 0.7, &counts);
  CHECK(counts.oov == 1);
}

TEST_CASE("colors RGB distance against the bundled table") {
  const auto& t = RgbTable::bundled();
  const auto black = colors_only({{Color::Black, 1.0}});
  CHECK(*colors_rgb_distance(black, black, t) == 0.0);
  // Black (0,0,0) vs Dark_Gray (0.25,0.25,0.25): sqrt(3 * 0.0625).
  const auto d = colors_rgb_distance(black, colors_only({{Color::Dark_Gray, 1.0}}), t);
  CHECK(*d == doctest::Approx(std::sqrt(3.0 * 0.0625)).epsilon(1e-12));
  CHECK(*d == doctest::Approx(0.4330).epsilon(1e-4));
  // Distance 0.6 is above the threshold: undefined.
  RgbTable custom = t;
  custom.set(Color::Red, {0.6, 0.0, 0.0});
  CHECK_FALSE(colors_rgb_distance(black, colors_only({{Color::Red, 1.0}}), custom).has_value());
}

TEST_CASE("colors coverage RMSE") {
  const auto gt = colors_only({{Color::Gray, 0.4}, {Color::Black, 0.14}});
  const auto pred = colors_only({{Color::Gray, 0.5}, {Color::Black, 0.14}, {Color::White, 0.36}});
  const double expected = std::sqrt((0.1 * 0.1 + 0.0) / 2.0);
  CHECK(*colors_coverage_rmse(gt, pred) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(std::round(*colors_coverage_rmse(gt, pred) * 1e6) / 1e6 == 0.070711);
  CHECK_FALSE(colors_coverage_rmse(gt, colors_only({{Color::Red, 0.3}})).has_value());

  const auto l1 = parse_verbalization(kpigen::testing::listing_output(1), ValidationMode::strict).value;
  CHECK(*colors_coverage_rmse(l1, l1) == 0.0);
}

TEST_CASE("tones coverage RMSE") {
  Verbalization gt, pred;
  gt.tones[Tone::neutral] = 1.0;
  pred.tones[Tone::neutral] = 0.5;
  pred.tones[Tone::warm] = 0.5;
  CHECK(*tones_coverage_rmse(gt, pred) == 0.5);
  CHECK(*tones_coverage_rmse(gt, gt) == 0.0);
  Verbalization cool, warm;
  cool.tones[Tone::cool] = 1.0;
  warm.tones[Tone::warm] = 1.0;
  CHECK_FALSE(tones_coverage_rmse(cool, warm).has_value());
}

TEST_CASE("objects IOU and similarity") {
  const auto l1 = parse_verbalization(kpigen::testing::listing_output(1), ValidationMode::strict).value;
  CHECK(*objects_iou(l1, l1) == 1.0);
  const auto two = objects_only({{"man", {0, 0, 1, 1}}, {"banknote bill", {0, 0, 1, 1}}});
  CHECK(*objects_iou(two, objects_only({{"Man ", {5, 5, 6, 6}}})) == 0.5);
  CHECK(*objects_iou(two, objects_only({{"cat", {0, 0, 1, 1}}})) == 0.0);

  CHECK(*objects_similarity(two, two, kOneHot) == doctest::Approx(1.0));
  const auto p = pair_provider("sofa", "couch", 0.9);
  const auto s = objects_similarity(objects_only({{"sofa", {0, 0, 1, 1}}}), objects_only({{"couch", {0, 0, 1, 1}}}), p);
  CHECK(*s == doctest::Approx(0.9).epsilon(1e-12));
  const auto low = pair_provider("sofa", "couch", 0.5);
  CHECK_FALSE(
      objects_similarity(objects_only({{"sofa", {0, 0, 1, 1}}}), objects_only({{"couch", {0, 0, 1, 1}}}), low)
          .has_value());
}

TEST_CASE("multi-word labels embed as the mean of their words") {
  VectorTableProvider p;
  p.add("safety", {1.0, 0.0});
  p.add("vest", {0.0, 1.0});
  p.add("jacket", {0.0, 1.0});
  // mean(safety, vest) = (0.5, 0.5); cos with (0, 1) = 1/sqrt(2).
  CHECK(*p.similarity("safety vest", "jacket") == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
  // Unknown words are skipped, a label with no known word is OOV.
  CHECK(*p.similarity("yellow vest", "jacket") == doctest::Approx(1.0));
  CHECK_FALSE(p.similarity("umbrella", "jacket").has_value());
}

TEST_CASE("normalized area RMSE worked example") {
  const auto gt = objects_only({{"cat", {0, 0, 50, 40}}});
  const auto pred = objects_only({{"cat", {0, 0, 40, 40}}});
  const auto v = objects_area_rmse_norm(gt, pred, {100, 100}, kOneHot);
  CHECK(*v == doctest::Approx(std::sqrt(400.0 * 400.0 * 0.2) / 10000.0).epsilon(1e-12));
  CHECK(std::round(*v * 1e6) / 1e6 == 0.017889);
  CHECK(*objects_area_rmse_norm(gt, gt, {100, 100}, kOneHot) == 0.0);
  CHECK_FALSE(objects_area_rmse_norm(gt, objects_only({{"dog", {0, 0, 1, 1}}}), {100, 100}, kOneHot).has_value());
  CHECK_THROWS_AS(objects_area_rmse_norm(gt, pred, {0, 100}, kOneHot), std::invalid_argument);
}

TEST_CASE("relative position error worked example") {
  const auto gt = objects_only({{"cat", {0, 0, 50, 40}}});     // centroid (25, 20)
  const auto pred = objects_only({{"cat", {0, 0, 40, 40}}});   // centroid (20, 20)
  const auto v = relative_position_error_norm(gt, pred, {100, 100}, kOneHot);
  CHECK(*v == doctest::Approx(5.0 / std::hypot(100.0, 100.0)).epsilon(1e-12));
  CHECK(std::round(*v * 1e6) / 1e6 == 0.035355);
  CHECK(*relative_position_error_norm(gt, gt, {100, 100}, kOneHot) == 0.0);
  CHECK_FALSE(relative_position_error_norm(gt, objects_only({}), {100, 100}, kOneHot).has_value());
}

TEST_CASE("full report on identical inputs") {
  const auto l1 = parse_verbalization(kpigen::testing::listing_output(1), ValidationMode::strict).value;
  const auto r = full_report(l1, l1, {5760, 3840}, kOneHot, RgbTable::bundled());
  CHECK(*r[Metric::colors_iou] == 1.0);
  CHECK(*r[Metric::objects_iou] == 1.0);
  // Cross pairs are not matched: Gray vs Dark_Gray (one-hot cosine 1/sqrt(2))
  // clears the threshold in both directions next to the five self pairs.
  CHECK(*r[Metric::colors_similarity] == doctest::Approx((5.0 + 2.0 / std::sqrt(2.0)) / 7.0).epsilon(1e-12));
  // "safety vest" vs the other one-word labels shares no word.
  CHECK(*r[Metric::objects_similarity] == doctest::Approx(1.0));
  CHECK(*r[Metric::colors_coverage_rmse] == 0.0);
  CHECK(*r[Metric::tones_coverage_rmse] == 0.0);
  CHECK(*r[Metric::objects_area_rmse_norm] == 0.0);
  CHECK(*r[Metric::relative_position_error_norm] == 0.0);
  // RGB: every color pairs with itself (0) and with near neighbours; the
  // mean over qualifying pairs is positive but below the threshold.
  CHECK(*r[Metric::colors_rgb_distance] >= 0.0);
  CHECK(*r[Metric::colors_rgb_distance] < 0.5);
}

TEST_CASE("full report is exact on gt = pred when labels are dissimilar") {
  Verbalization v = colors_only({{Color::Gray, 0.6}, {Color::Black, 0.4}});
  v.objects = {{"cat", {0, 0, 5, 5}}, {"dog", {5, 5, 9, 9}}};
  const auto r = full_report(v, v, {10, 10}, kOneHot, RgbTable::bundled());
  CHECK(*r[Metric::colors_similarity] == 1.0);
  CHECK(*r[Metric::objects_similarity] == 1.0);
  CHECK(*r[Metric::colors_rgb_distance] == 0.0);
}

TEST_CASE("corpus means skip undefined entries") {
  const auto gray = colors_only({{Color::Gray, 1.0}});
  const auto red = colors_only({{Color::Red, 1.0}});
  std::vector<ScoredPair> pairs{{&gray, &gray, {10, 10}}, {&gray, &red, {10, 10}}};
  for (unsigned threads : {1u, 2u}) {
    const auto s = score_corpus(pairs, kOneHot, RgbTable::bundled(), {}, threads);
    const auto k = static_cast<std::size_t>(Metric::colors_similarity);
    CHECK(*s.means[k] == doctest::Approx(1.0));
    CHECK(s.skipped[k] == 1);
    CHECK(*s.means[static_cast<std::size_t>(Metric::colors_iou)] == 0.5);
  }
  std::ostringstream csv;
  const auto s = score_corpus(pairs, kOneHot, RgbTable::bundled());
  write_report_csv(csv, {"a,1", "b"}, s);
  const std::string text = csv.str();
  CHECK(text.rfind("id,colors_iou,", 0) == 0);
  CHECK(text.find("\n\"a,1\",1,") != std::string::npos);
  CHECK(text.find("\nsummary,0.5,1,") != std::string::npos);
  CHECK(text.find("\nskipped,0,1,") != std::string::npos);
}

TEST_CASE("vector and RGB files") {
  std::istringstream vec("cat 1 0\ndog 0.6 0.8\n");
  const auto p = VectorTableProvider::load(vec);
  CHECK(p.dimension() == 2);
  CHECK(*p.similarity("cat", "dog") == doctest::Approx(0.6));
  std::istringstream bad("cat 1 0\ndog 1\n");
  CHECK_THROWS(VectorTableProvider::load(bad));

  std::istringstream rgb("# override\nGray 0.4 0.4 0.4\n");
  const auto t = RgbTable::load(rgb);
  CHECK(t[Color::Gray][0] == 0.4);
  CHECK(t[Color::Black][0] == 0.0);
  std::istringstream unknown("Teal 0 0.5 0.5\n");
  CHECK_THROWS(RgbTable::load(unknown));
}

TEST_CASE("bundled RGB table is total and normalized") {
  for (Color c : all_colors()) {
    for (double x : RgbTable::bundled()[c]) CHECK((x >= 0.0 && x <= 1.0));
  }
}

TEST_CASE("properties: symmetry, ranges and threshold monotonicity") {
  std::mt19937_64 rng(7);
  const auto table = oracle::random_table(rng, kpigen::testing::label_pool());
  const auto provider = oracle::provider_from(table);
  for (int i = 0; i < 200; ++i) {
    const auto g = kpigen::testing::random_verbalization(rng);
    const auto p = kpigen::testing::random_verbalization(rng);
    CHECK(colors_iou(g, p) == colors_iou(p, g));
    CHECK(objects_iou(g, p) == objects_iou(p, g));
    if (auto v = colors_iou(g, p)) CHECK((*v >= 0.0 && *v <= 1.0));
    if (auto v = objects_iou(g, p)) CHECK((*v >= 0.0 && *v <= 1.0));
    const auto r = full_report(g, p, {1000, 800}, provider, RgbTable::bundled());
    for (auto m : {Metric::colors_rgb_distance, Metric::colors_coverage_rmse, Metric::tones_coverage_rmse,
                   Metric::objects_area_rmse_norm, Metric::relative_position_error_norm}) {
      if (r[m]) CHECK(*r[m] >= 0.0);
    }
    PairCounts lo, hi;
    objects_similarity(g, p, provider, 0.5, &lo);
    objects_similarity(g, p, provider, 0.8, &hi);
    CHECK(hi.qualifying <= lo.qualifying);
    colors_rgb_distance(g, p, RgbTable::bundled(), 0.5, &lo);
    colors_rgb_distance(g, p, RgbTable::bundled(), 0.3, &hi);
    CHECK(hi.qualifying <= lo.qualifying);
  }
}

TEST_CASE("coverage RMSE grows as one matched prediction drifts") {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 100; ++i) {
    auto g = kpigen::testing::random_verbalization(rng);
    if (g.colors.empty()) continue;
    auto p = g;
    for (auto& c : p.colors) c.coverage = std::uniform_real_distribution<double>(0, 1)(rng);
    double prev = *colors_coverage_rmse(g, p);
    const double target = g.colors[0].coverage;
    for (int step = 1; step <= 5; ++step) {
      // move p's first color further from gt
      const double dir = p.colors[0].coverage >= target ? 1.0 : -1.0;
      p.colors[0].coverage += dir * 0.05;
      const double now = *colors_coverage_rmse(g, p);
      CHECK(now >= prev - 1e-15);
      prev = now;
    }
  }
}

TEST_CASE("brute-force oracle agreement on random pairs") {
  std::mt19937_64 rng(99);
  const auto table = oracle::random_table(rng, kpigen::testing::label_pool());
  const auto provider = oracle::provider_from(table);
  std::size_t defined_similarity = 0;
  for (int i = 0; i < 200; ++i) {
    const auto g = kpigen::testing::random_verbalization(rng);
    const auto p = kpigen::testing::random_verbalization(rng);
    const auto got = full_report(g, p, {1000, 800}, provider, RgbTable::bundled());
    const auto want = oracle::all(g, p, {1000, 800}, table, RgbTable::bundled());
    for (std::size_t m = 0; m < kMetricCount; ++m) {
      INFO("metric " << metric_name(static_cast<Metric>(m)) << " pair " << i);
      REQUIRE(got.values[m].has_value() == want[m].has_value());
      if (want[m]) CHECK(std::fabs(*got.values[m] - *want[m]) <= 1e-9);
    }
    defined_similarity += want[6].has_value();
  }
  // The generator must exercise the gated metrics, not only their undefined branch.
  CHECK(defined_similarity > 50);
}

}  // TEST_SUITE
