#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "cli.hpp"
#include "kpigen/dataset.hpp"
#include "test_support.hpp"

using namespace kpigen;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = fs::temp_directory_path() / ("kpigen-cli-" + std::to_string(rd()) + std::to_string(rd()));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  fs::path operator/(const std::string& s) const { return path_ / s; }
  std::string str(const std::string& s) const { return (path_ / s).string(); }

 private:
  fs::path path_;
};

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

std::vector<MediaRecord> listing_records() {
  std::ifstream in(kpigen::testing::data_dir() / "listing_records.jsonl");
  return read_media_records(in);
}

std::string records_file(const std::vector<MediaRecord>& rs) {
  std::string s;
  for (const auto& r : rs) s += media_record_line(r) + "\n";
  return s;
}

std::size_t word_count(const std::string& s) {
  std::istringstream in(s);
  std::size_t n = 0;
  for (std::string w; in >> w;) ++n;
  return n;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("usage errors exit 2, help and version exit 0") {
  CHECK(run({}).code == cli::kUsageError);
  CHECK(run({"frobnicate"}).code == cli::kUsageError);
  CHECK(run({"score", "--gt", "x"}).code == cli::kUsageError);
  CHECK(run({"--help"}).code == cli::kOk);
  const auto v = run({"--version"});
  CHECK(v.code == cli::kOk);
  CHECK(v.out.find(cli::kVersion) != std::string::npos);
}

TEST_CASE("validate: strict reports errors, lenient repairs") {
  TempDir d;
  write_file(d / "c.jsonl",
             R"({"color and tones": {"colors": {"Gray": {"coverage": 0.5}}, "tones": {"warm": 0, "neutral": 1.0, "cool": 0}}, "objects": {"a": [50, 50, 10, 10]}})"
             "\n");
  const auto strict = run({"validate", d.str("c.jsonl")});
  CHECK(strict.code == cli::kDomainError);
  CHECK(strict.out.find("\terror\t") != std::string::npos);
  const auto lenient = run({"validate", d.str("c.jsonl"), "--mode", "lenient", "--out-dir", d.str("v")});
  CHECK(lenient.code == cli::kOk);
  CHECK(lenient.out.find("\trepaired\t") != std::string::npos);
  CHECK(lenient.out.find("records 1, errors 0, repairs 1") != std::string::npos);
  CHECK(fs::exists(d / "v/validate.manifest.json"));
  CHECK(run({"validate", d.str("missing.jsonl")}).code == cli::kBackendError);
}

TEST_CASE("score: identical corpora give perfect overlap, mismatched ids fail") {
  TempDir d;
  std::mt19937_64 rng(5);
  std::string corpus;
  for (int i = 0; i < 5; ++i) {
    corpus += corpus_line("img" + std::to_string(i), kpigen::testing::random_verbalization(rng), Resolution{1000, 800}) + "\n";
  }
  write_file(d / "gt.jsonl", corpus);
  const auto r = run({"score", "--gt", d.str("gt.jsonl"), "--pred", d.str("gt.jsonl"), "--out-dir", d.str("s")});
  REQUIRE(r.code == cli::kOk);
  const std::string csv = kpigen::testing::slurp(d / "s/metrics.csv");
  std::istringstream lines(csv);
  std::string header, row;
  std::getline(lines, header);
  CHECK(header.rfind("id,colors_iou", 0) == 0);
  std::getline(lines, row);
  CHECK(row.rfind("img0,", 0) == 0);
  CHECK(fs::exists(d / "s/score.manifest.json"));
  const std::string manifest = kpigen::testing::slurp(d / "s/score.manifest.json");
  CHECK(manifest.find("\"inputs\"") != std::string::npos);
  CHECK(manifest.find("\"seed\"") != std::string::npos);

  std::string other;
  std::mt19937_64 rng2(5);
  for (int i = 0; i < 5; ++i) {
    other += corpus_line("other" + std::to_string(i), kpigen::testing::random_verbalization(rng2), Resolution{1000, 800}) + "\n";
  }
  write_file(d / "pred.jsonl", other);
  const auto bad = run({"score", "--gt", d.str("gt.jsonl"), "--pred", d.str("pred.jsonl"), "--out-dir", d.str("t")});
  CHECK(bad.code == cli::kDomainError);
  CHECK(bad.err.find("gt:img0") != std::string::npos);
  CHECK_FALSE(fs::exists(d / "t/metrics.csv"));
}

TEST_CASE("score: worked example values") {
  TempDir d;
  write_file(d / "gt.jsonl",
             R"({"id": "x", "resolution": [100, 100], "record": {"color and tones": {"colors": {"Red": {"coverage": 0.5}, "Blue": {"coverage": 0.3}}, "tones": {"warm": 0.5, "neutral": 0.5, "cool": 0}}, "objects": {}}})"
             "\n");
  write_file(d / "pred.jsonl",
             R"({"id": "x", "resolution": [100, 100], "record": {"color and tones": {"colors": {"Red": {"coverage": 0.4}, "Green": {"coverage": 0.6}}, "tones": {"warm": 1.0, "neutral": 0, "cool": 0}}, "objects": {}}})"
             "\n");
  const auto r = run({"score", "--gt", d.str("gt.jsonl"), "--pred", d.str("pred.jsonl"), "--out-dir", d.str("s")});
  REQUIRE(r.code == cli::kOk);
  const std::string csv = kpigen::testing::slurp(d / "s/metrics.csv");
  // |{Red}| / |{Red, Blue, Green}| and a single matched coverage pair.
  CHECK(csv.find("x,0.3333333333333333") != std::string::npos);
  CHECK(csv.find(",0.09999999999999997") != std::string::npos);
  CHECK(csv.find(",0.5,,,,,0\n") != std::string::npos);
}

TEST_CASE("bucket and split") {
  TempDir d;
  std::vector<MediaRecord> rs;
  for (int v = 1; v <= 100; ++v) {
    MediaRecord r;
    r.id = "r" + std::to_string(1000 + v);
    r.account = "acme";
    r.timestamp = "2024-01-01";
    r.resolution = {10, 10};
    r.kpis["likes"] = v;
    rs.push_back(r);
  }
  write_file(d / "r.jsonl", records_file(rs));
  const auto b = run({"bucket", "--records", d.str("r.jsonl"), "--kpi", "likes", "--out-dir", d.str("b")});
  REQUIRE(b.code == cli::kOk);
  CHECK(b.out.find("High\t10\t95.5") != std::string::npos);
  CHECK(b.out.find("Low\t60\t30.5") != std::string::npos);
  const std::string csv = kpigen::testing::slurp(d / "b/buckets.csv");
  CHECK(csv.rfind("id,account,kpi,label\n", 0) == 0);
  CHECK(csv.find("r1100,acme,100,High") != std::string::npos);

  const auto s = run({"split", "--buckets", d.str("b/buckets.csv"), "--test-per-bucket", "5", "--seed", "3",
                      "--out-dir", d.str("s")});
  REQUIRE(s.code == cli::kOk);
  CHECK(s.out.find("train 60, test 10") != std::string::npos);
  const auto s2 = run({"split", "--buckets", d.str("b/buckets.csv"), "--test-per-bucket", "5", "--seed", "3",
                       "--out-dir", d.str("s2")});
  CHECK(kpigen::testing::slurp(d / "s/split.csv") == kpigen::testing::slurp(d / "s2/split.csv"));
  const auto too_many = run({"split", "--buckets", d.str("b/buckets.csv"), "--test-per-bucket", "11", "--out-dir",
                             d.str("s3")});
  CHECK(too_many.code == cli::kDomainError);
}

TEST_CASE("build-instructions reproduces the first golden listing") {
  TempDir d;
  const auto rs = listing_records();
  write_file(d / "l1.jsonl", records_file({rs[0]}));
  const auto r = run({"build-instructions", "--records", d.str("l1.jsonl"), "--mix", "1,0,0,0", "--out-dir",
                      d.str("o")});
  REQUIRE(r.code == cli::kOk);
  CHECK(kpigen::testing::slurp(d / "o/listings.txt") ==
        kpigen::testing::slurp(kpigen::testing::golden_dir() / "listing1.txt"));
  CHECK(fs::exists(d / "o/pairs.jsonl"));
  CHECK(fs::exists(d / "o/build-instructions.manifest.json"));

  write_file(d / "all.jsonl", records_file(rs));
  const auto all = run({"build-instructions", "--records", d.str("all.jsonl"), "--out-dir", d.str("p")});
  REQUIRE(all.code == cli::kOk);
  CHECK(all.out.find("pairs 2, excluded 2") != std::string::npos);
  CHECK(run({"build-instructions", "--records", d.str("all.jsonl"), "--mix", "1,1", "--out-dir", d.str("q")}).code ==
        cli::kUsageError);
}

TEST_CASE("reward with a mock backend") {
  TempDir d;
  auto rs = listing_records();
  rs.resize(2);
  rs[0].media_group = "g";
  rs[1].media_group = "g";
  write_file(d / "c.jsonl", records_file(rs));
  const auto r = run({"reward", "--records", d.str("c.jsonl"), "--mock", "fixed:1", "--out-dir", d.str("o")});
  REQUIRE(r.code == cli::kOk);
  const std::string csv = kpigen::testing::slurp(d / "o/rewards.csv");
  const auto n0 = word_count(serialize_verbalization(*rs[0].verbalization));
  CHECK(csv.find("listing1,g," + std::to_string(n0) + "\n") != std::string::npos);

  const auto best = run({"reward", "--records", d.str("c.jsonl"), "--mock", "fixed:1", "--best-of", "1",
                         "--out-dir", d.str("b")});
  REQUIRE(best.code == cli::kOk);
  const std::string bcsv = kpigen::testing::slurp(d / "b/rewards.csv");
  const auto n1 = word_count(serialize_verbalization(*rs[1].verbalization));
  const std::string winner = n0 >= n1 ? "listing1" : "listing2";
  CHECK(bcsv == "group,rank,id,reward\ng,1," + winner + "," + std::to_string(std::max(n0, n1)) + "\n");

  CHECK(run({"reward", "--records", d.str("c.jsonl"), "--mock", "fixed:2", "--out-dir", d.str("x")}).code ==
        cli::kBackendError);
  CHECK(run({"reward", "--records", d.str("c.jsonl"), "--mock", "nonsense", "--out-dir", d.str("x")}).code ==
        cli::kUsageError);
}

TEST_CASE("reward against an unreachable backend exits 3 and writes nothing") {
  TempDir d;
  auto rs = listing_records();
  rs.resize(1);
  write_file(d / "c.jsonl", records_file(rs));
  const auto r = run({"reward", "--records", d.str("c.jsonl"), "--backend-url", "http://127.0.0.1:9", "--retries",
                      "1", "--out-dir", d.str("o")});
  CHECK(r.code == cli::kBackendError);
  CHECK_FALSE(fs::exists(d / "o/rewards.csv"));
}

TEST_CASE("ddpo-train: lr 0 keeps the policy at zero, seeds reproduce") {
  TempDir d;
  write_file(d / "cfg.txt", "# toy\nbatch_size = 16\nmax_updates = 40\nsmoothing_window = 5\n");
  const auto a = run({"ddpo-train", "--config", d.str("cfg.txt"), "--lr", "0", "--seed", "4", "--plot", "curve.svg",
                      "--out-dir", d.str("a")});
  REQUIRE(a.code == cli::kOk);
  const std::string policy = kpigen::testing::slurp(d / "a/policy.txt");
  std::istringstream ps(policy);
  std::string line;
  bool in_params = false;
  std::size_t nonzero = 0, params = 0;
  while (std::getline(ps, line)) {
    if (line.rfind("params", 0) == 0) {
      in_params = true;
      continue;
    }
    if (in_params && !line.empty()) {
      ++params;
      nonzero += std::stod(line) != 0.0;
    }
  }
  CHECK(params > 0);
  CHECK(nonzero == 0);
  CHECK(fs::exists(d / "a/curve.svg"));

  run({"ddpo-train", "--config", d.str("cfg.txt"), "--seed", "4", "--out-dir", d.str("b")});
  run({"ddpo-train", "--config", d.str("cfg.txt"), "--seed", "4", "--out-dir", d.str("c")});
  const std::string cb = kpigen::testing::slurp(d / "b/curve.csv");
  CHECK(cb == kpigen::testing::slurp(d / "c/curve.csv"));
  CHECK(std::count(cb.begin(), cb.end(), '\n') == 41);

  CHECK(run({"ddpo-train", "--lr", "-1", "--out-dir", d.str("e")}).code == cli::kUsageError);
  CHECK(run({"ddpo-train", "--plot", "../escape.svg", "--out-dir", d.str("e")}).code == cli::kUsageError);
  write_file(d / "bad.txt", "task = painting\n");
  CHECK(run({"ddpo-train", "--config", d.str("bad.txt"), "--out-dir", d.str("e")}).code == cli::kUsageError);
}

TEST_CASE("ddpo-train: verbal task reports color frequencies") {
  TempDir d;
  write_file(d / "cfg.txt", "task = verbal\nmax_updates = 5\nbatch_size = 8\n");
  const auto r = run({"ddpo-train", "--config", d.str("cfg.txt"), "--out-dir", d.str("v")});
  REQUIRE(r.code == cli::kOk);
  CHECK(r.out.find("frequency") != std::string::npos);
}

}  // TEST_SUITE
