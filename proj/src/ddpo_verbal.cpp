#include "kpigen/ddpo_verbal.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <memory>

#include "kpigen/seed.hpp"

namespace kpigen::ddpo {

namespace {

struct Anchor {
  Color color;
  double x;
  double y;
};

constexpr std::array<Anchor, 4> kAnchors{{
    {Color::Red, 1.0, 0.0},
    {Color::Blue, -1.0, 0.0},
    {Color::Green, 0.0, 1.0},
    {Color::Yellow, 0.0, -1.0},
}};

double clamp_frame(double v) { return std::clamp(v, 0.0, 100.0); }

}  // namespace

Verbalization anchor_featurizer(const Vec& terminal) {
  if (terminal.size() != 2) throw std::invalid_argument("anchor featurizer expects a 2-d state");
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < kAnchors.size(); ++i) {
    const double dx = terminal[0] - kAnchors[i].x;
    const double dy = terminal[1] - kAnchors[i].y;
    const double d = dx * dx + dy * dy;
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  Verbalization v;
  v.colors.push_back({kAnchors[best].color, 1.0});
  v.tones[Tone::neutral] = 1.0;

  // Round to 2 decimals like the pixel boxes in real records.
  auto r2 = [](double x) { return std::round(x * 100.0) / 100.0; };
  const double cx = 50.0 + 25.0 * terminal[0];
  const double cy = 50.0 + 25.0 * terminal[1];
  BBox box{r2(clamp_frame(cx - 10.0)), r2(clamp_frame(cy - 10.0)), r2(clamp_frame(cx + 10.0)),
           r2(clamp_frame(cy + 10.0))};
  // Far outside the frame the clamped box collapses; keep a one-pixel sliver.
  auto widen = [](double& lo, double& hi) {
    if (hi - lo >= 1.0) return;
    if (hi >= 1.0) lo = hi - 1.0;
    else hi = lo + 1.0;
  };
  widen(box.x1, box.x2);
  widen(box.y1, box.y2);
  v.objects.push_back({"blob", box});
  return v;
}

VerbalRewardSetup toy_reward_setup() {
  VerbalRewardSetup s;
  MediaRecord& p = s.prompt.prompt;
  p.id = "toy";
  p.account = "toy";
  p.timestamp = "2024-01-01";
  p.caption = "Abstract blob on a plain background";
  p.keywords = {"abstract", "blob", "minimal"};
  p.resolution = kToyResolution;
  s.prompt.schema = Schema::stock;
  s.prompt.target_kpis = {{"downloads", 100}, {"forwards", 100}, {"impressions", 10000}};
  s.options.max_in_flight = 1;
  return s;
}

BatchRewardFn verbal_reward(Featurizer featurizer, const LogitBackend& backend, VerbalRewardSetup setup) {
  auto calls = std::make_shared<std::size_t>(0);
  return [featurizer = std::move(featurizer), &backend, setup = std::move(setup),
          calls](std::span<const Trajectory> batch) {
    std::vector<RewardRequest> reqs(batch.size(), setup.prompt);
    const std::string prefix = setup.id_prefix + std::to_string((*calls)++) + "-";
    for (std::size_t i = 0; i < batch.size(); ++i) {
      reqs[i].id = prefix + std::to_string(i);
      reqs[i].verbalization = featurizer(batch[i].terminal());
    }
    return batch_reward(reqs, backend, setup.options);
  };
}

TrainResult train_with_verbal_reward(const DenoisingMdp& mdp, GaussianPolicy policy, Featurizer featurizer,
                                     const LogitBackend& backend, const VerbalRewardSetup& setup,
                                     const TrainerConfig& config,
                                     const std::function<void(const CurvePoint&)>& on_update) {
  return train(mdp, std::move(policy), verbal_reward(std::move(featurizer), backend, setup), config, on_update);
}

double color_frequency(const DenoisingMdp& mdp, const GaussianPolicy& policy, const Featurizer& featurizer,
                       Color color, std::size_t n, std::uint64_t seed) {
  const auto trajs = rollout(mdp, policy, n, seed);
  std::size_t hits = 0;
  for (const auto& t : trajs) {
    const Verbalization v = featurizer(t.terminal());
    hits += std::any_of(v.colors.begin(), v.colors.end(), [&](const ColorEntry& e) { return e.color == color; });
  }
  return static_cast<double>(hits) / static_cast<double>(n);
}

}  // namespace kpigen::ddpo
