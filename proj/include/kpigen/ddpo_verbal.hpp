#pragma once

// Training against the verbal reward: terminal representations are
// featurized into verbalizations and scored through a logit backend.

#include <functional>
#include <string>

#include "kpigen/ddpo.hpp"
#include "kpigen/reward.hpp"

namespace kpigen::ddpo {

using Featurizer = std::function<Verbalization(const Vec& terminal)>;

// Toy featurizer over R^2: the nearest of four anchor colors (Red (1, 0),
// Blue (-1, 0), Green (0, 1), Yellow (0, -1)) with coverage 1 and a neutral
// tone, plus one 20x20 "blob" box in a 100x100 image centred at 50 + 25 x
// (clamped to the frame).
Verbalization anchor_featurizer(const Vec& terminal);
inline constexpr Resolution kToyResolution{100, 100};

// Prompt and options shared by every reward query of a run. Request ids are
// "<id_prefix><update>-<index>".
struct VerbalRewardSetup {
  RewardRequest prompt;  // verbalization is replaced per trajectory
  RewardOptions options;
  std::string id_prefix = "traj-";
};

// Stock-schema prompt for a 100x100 toy image.
VerbalRewardSetup toy_reward_setup();

// Batch reward that featurizes each terminal state and scores it with
// batch_reward.
BatchRewardFn verbal_reward(Featurizer featurizer, const LogitBackend& backend, VerbalRewardSetup setup);

TrainResult train_with_verbal_reward(const DenoisingMdp& mdp, GaussianPolicy policy, Featurizer featurizer,
                                     const LogitBackend& backend, const VerbalRewardSetup& setup,
                                     const TrainerConfig& config,
                                     const std::function<void(const CurvePoint&)>& on_update = {});

// Fraction of n fresh rollouts whose featurized terminal state lists `color`.
double color_frequency(const DenoisingMdp& mdp, const GaussianPolicy& policy, const Featurizer& featurizer,
                       Color color, std::size_t n, std::uint64_t seed);

}  // namespace kpigen::ddpo
