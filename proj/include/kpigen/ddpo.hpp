#pragma once

// Policy-gradient training of a toy denoising process.
//
// Denoising is a finite-horizon MDP: the state is (context c, steps left t,
// representation x); x starts standard normal, each action is the next
// representation, and the transition is deterministic: (c, t, x) -> (c, t-1,
// action). A reward arrives only after the last step, computed from the
// final representation. The policy is Gaussian around a small
// differentiable mean function with a fixed per-step standard deviation, and
// is trained with the clipped importance-weighted policy gradient.
//
// Gradients are derived by hand; there is no autodiff dependency.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace kpigen::ddpo {

using Vec = std::vector<double>;

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct State {
  Vec context;
  int steps_left = 0;
  Vec x;

  bool operator==(const State&) const = default;
};

struct DenoisingMdp {
  std::size_t dim = 2;
  std::size_t context_dim = 2;
  int horizon = 5;
  // Context for a new trajectory; defaults to standard normal draws.
  std::function<Vec(std::mt19937_64&)> sample_context;

  State initial(const Vec& context, std::mt19937_64& rng) const;
  static State transition(const State& s, const Vec& action);
};

// Standard-normal contexts of dimension mdp.context_dim.
Vec standard_normal(std::size_t n, std::mt19937_64& rng);

class GaussianPolicy {
 public:
  enum class Family { affine, tanh_mlp };

  // mean = W z + b with z = [x, c, t / T]; zero-initialized.
  static GaussianPolicy affine(std::size_t dim, std::size_t context_dim, int horizon, double sigma);
  // mean = W2 tanh(W1 z + b1) + b2; W1 small random, output layer zero.
  static GaussianPolicy tanh_mlp(std::size_t dim, std::size_t context_dim, std::size_t hidden, int horizon,
                                 double sigma, std::uint64_t init_seed);

  Family family() const { return family_; }
  std::size_t dim() const { return dim_; }
  std::size_t context_dim() const { return context_dim_; }
  std::size_t hidden() const { return hidden_; }
  int horizon() const { return static_cast<int>(sigma_.size()); }
  std::size_t input_dim() const { return dim_ + context_dim_ + 1; }

  Vec& params() { return params_; }
  const Vec& params() const { return params_; }
  // Standard deviation used when `steps_left` steps remain (1..T).
  double sigma(int steps_left) const { return sigma_.at(static_cast<std::size_t>(steps_left - 1)); }
  void set_sigma(int steps_left, double sigma);

  Vec mean(const State& s) const;
  double log_prob(const State& s, const Vec& action) const;
  // d log N(action; mean, sigma^2 I) / d params. Throws when sigma is 0.
  Vec log_prob_grad(const State& s, const Vec& action) const;
  // Draws an action; with sigma == 0 the action is the mean.
  Vec sample(const State& s, std::mt19937_64& rng) const;

  // Versioned plain-text checkpoint.
  void save(std::ostream& out) const;
  static GaussianPolicy load(std::istream& in);

 private:
  GaussianPolicy(Family f, std::size_t dim, std::size_t context_dim, std::size_t hidden, int horizon, double sigma);

  Vec features(const State& s) const;

  Family family_;
  std::size_t dim_;
  std::size_t context_dim_;
  std::size_t hidden_;
  Vec sigma_;
  Vec params_;
};

struct Step {
  State state;
  Vec action;
  double logp = 0.0;  // under the sampling policy; 0 for sigma == 0
};

struct Trajectory {
  std::vector<Step> steps;
  double reward = 0.0;

  const Vec& context() const { return steps.front().state.context; }
  const Vec& terminal() const { return steps.back().action; }
};

// n independent trajectories of exactly T steps, trajectory i drawn from
// its own stream derived from `seed`, so the result does not depend on
// `threads`. Rewards are left at 0.
std::vector<Trajectory> rollout(const DenoisingMdp& mdp, const GaussianPolicy& policy, std::size_t n,
                                std::uint64_t seed, unsigned threads = 1);

struct TrainerConfig {
  std::size_t batch_size = 64;
  double learning_rate = 0.01;
  double clip_epsilon = 0.2;
  std::size_t inner_epochs = 1;
  bool normalize_advantages = true;
  std::uint64_t seed = 0;
  std::size_t max_updates = 1000;
  unsigned threads = 1;

  void validate() const;
};

// Advantages for one batch. With normalization, (r - mean) / (std + 1e-8);
// when the rewards have zero variance this falls back to r - mean (all
// zeros) and sets `zero_variance`.
Vec advantages(std::span<const Trajectory> batch, bool normalize, bool* zero_variance = nullptr);

struct SurrogateStats {
  double mean_ratio = 0.0;
  double max_ratio_deviation = 0.0;  // max |ratio - 1|
  double clip_fraction = 0.0;
};

// Gradient of the mean clipped surrogate min(rA, clip(r, 1-eps, 1+eps)A)
// over all steps, with r = exp(logp_new - logp_old). Clipped steps
// contribute nothing.
Vec surrogate_gradient(const GaussianPolicy& policy, std::span<const Trajectory> batch, std::span<const double> adv,
                       double clip_epsilon, SurrogateStats* stats = nullptr);

struct UpdateDiagnostics {
  double mean_reward = 0.0;
  double std_reward = 0.0;
  double mean_ratio = 0.0;
  double clip_fraction = 0.0;
  double first_epoch_ratio_deviation = 0.0;
  bool zero_variance = false;
};

// Gradient ascent on the surrogate for config.inner_epochs passes over the
// batch.
UpdateDiagnostics update(GaussianPolicy& policy, std::span<const Trajectory> batch, const TrainerConfig& config);

using RewardFn = std::function<double(const Vec& terminal, const Vec& context)>;
using BatchRewardFn = std::function<Vec(std::span<const Trajectory>)>;

BatchRewardFn per_trajectory(RewardFn fn);

struct CurvePoint {
  std::size_t update = 0;
  double mean_reward = 0.0;
  double std_reward = 0.0;
  double clip_fraction = 0.0;
};

struct TrainResult {
  std::vector<CurvePoint> curve;
  GaussianPolicy policy;
  std::size_t zero_variance_updates = 0;
};

// Alternates rollout and update. Throws TrainingError if a batch mean reward
// is not finite.
TrainResult train(const DenoisingMdp& mdp, GaussianPolicy policy, const BatchRewardFn& reward,
                  const TrainerConfig& config, const std::function<void(const CurvePoint&)>& on_update = {});

// update,mean_reward,std_reward,clip_fraction
void write_curve_csv(std::ostream& out, std::span<const CurvePoint> curve);

// Quadratic toy reward -|x - c|^2: the context is the goal.
double quadratic_reward(const Vec& terminal, const Vec& context);

// Trailing moving average of the batch mean rewards.
Vec smoothed_rewards(std::span<const CurvePoint> curve, std::size_t window);

}  // namespace kpigen::ddpo
