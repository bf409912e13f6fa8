#include "kpigen/ddpo.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>
#include <thread>

#include "kpigen/seed.hpp"

namespace kpigen::ddpo {

namespace {

constexpr const char* kCheckpointMagic = "kpigen-policy";
constexpr int kCheckpointVersion = 1;

const char* family_name(GaussianPolicy::Family f) {
  return f == GaussianPolicy::Family::affine ? "affine" : "tanh_mlp";
}

}  // namespace

Vec standard_normal(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vec v(n);
  for (double& x : v) x = normal(rng);
  return v;
}

State DenoisingMdp::initial(const Vec& context, std::mt19937_64& rng) const {
  if (horizon < 1) throw std::invalid_argument("horizon must be at least 1");
  return State{context, horizon, standard_normal(dim, rng)};
}

State DenoisingMdp::transition(const State& s, const Vec& action) { return State{s.context, s.steps_left - 1, action}; }

// ---------------------------------------------------------------------------
// Policy

GaussianPolicy::GaussianPolicy(Family f, std::size_t dim, std::size_t context_dim, std::size_t hidden, int horizon,
                               double sigma)
    : family_(f), dim_(dim), context_dim_(context_dim), hidden_(hidden) {
  if (dim == 0) throw std::invalid_argument("policy dimension must be positive");
  if (horizon < 1) throw std::invalid_argument("horizon must be at least 1");
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw std::invalid_argument("sigma must be finite and nonnegative");
  sigma_.assign(static_cast<std::size_t>(horizon), sigma);
  const std::size_t m = input_dim();
  params_.assign(f == Family::affine ? dim * m + dim : hidden * m + hidden + dim * hidden + dim, 0.0);
}

GaussianPolicy GaussianPolicy::affine(std::size_t dim, std::size_t context_dim, int horizon, double sigma) {
  return GaussianPolicy(Family::affine, dim, context_dim, 0, horizon, sigma);
}

GaussianPolicy GaussianPolicy::tanh_mlp(std::size_t dim, std::size_t context_dim, std::size_t hidden, int horizon,
                                        double sigma, std::uint64_t init_seed) {
  if (hidden == 0) throw std::invalid_argument("hidden width must be positive");
  GaussianPolicy p(Family::tanh_mlp, dim, context_dim, hidden, horizon, sigma);
  std::mt19937_64 rng(init_seed);
  const std::size_t m = p.input_dim();
  std::normal_distribution<double> init(0.0, 1.0 / std::sqrt(static_cast<double>(m)));
  for (std::size_t i = 0; i < hidden * m; ++i) p.params_[i] = init(rng);
  return p;
}

void GaussianPolicy::set_sigma(int steps_left, double sigma) {
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw std::invalid_argument("sigma must be finite and nonnegative");
  sigma_.at(static_cast<std::size_t>(steps_left - 1)) = sigma;
}

Vec GaussianPolicy::features(const State& s) const {
  if (s.x.size() != dim_ || s.context.size() != context_dim_) throw std::invalid_argument("state shape mismatch");
  Vec z;
  z.reserve(input_dim());
  z.insert(z.end(), s.x.begin(), s.x.end());
  z.insert(z.end(), s.context.begin(), s.context.end());
  z.push_back(static_cast<double>(s.steps_left) / static_cast<double>(horizon()));
  return z;
}

Vec GaussianPolicy::mean(const State& s) const {
  const Vec z = features(s);
  const std::size_t m = z.size();
  Vec mu(dim_, 0.0);
  if (family_ == Family::affine) {
    const double* w = params_.data();
    const double* b = w + dim_ * m;
    for (std::size_t i = 0; i < dim_; ++i) {
      double acc = b[i];
      for (std::size_t j = 0; j < m; ++j) acc += w[i * m + j] * z[j];
      mu[i] = acc;
    }
    return mu;
  }
  const double* w1 = params_.data();
  const double* b1 = w1 + hidden_ * m;
  const double* w2 = b1 + hidden_;
  const double* b2 = w2 + dim_ * hidden_;
  Vec h(hidden_);
  for (std::size_t k = 0; k < hidden_; ++k) {
    double acc = b1[k];
    for (std::size_t j = 0; j < m; ++j) acc += w1[k * m + j] * z[j];
    h[k] = std::tanh(acc);
  }
  for (std::size_t i = 0; i < dim_; ++i) {
    double acc = b2[i];
    for (std::size_t k = 0; k < hidden_; ++k) acc += w2[i * hidden_ + k] * h[k];
    mu[i] = acc;
  }
  return mu;
}

double GaussianPolicy::log_prob(const State& s, const Vec& action) const {
  const double sd = sigma(s.steps_left);
  if (sd <= 0.0) throw std::invalid_argument("log-density undefined for sigma = 0");
  const Vec mu = mean(s);
  double sq = 0.0;
  for (std::size_t i = 0; i < dim_; ++i) {
    const double u = (action[i] - mu[i]) / sd;
    sq += u * u;
  }
  const double d = static_cast<double>(dim_);
  return -0.5 * sq - d * std::log(sd) - 0.5 * d * std::log(2.0 * std::numbers::pi);
}

Vec GaussianPolicy::log_prob_grad(const State& s, const Vec& action) const {
  const double sd = sigma(s.steps_left);
  if (sd <= 0.0) throw std::invalid_argument("log-density gradient undefined for sigma = 0");
  const Vec z = features(s);
  const std::size_t m = z.size();
  const Vec mu = mean(s);
  // g = d log p / d mean
  Vec g(dim_);
  for (std::size_t i = 0; i < dim_; ++i) g[i] = (action[i] - mu[i]) / (sd * sd);

  Vec grad(params_.size(), 0.0);
  if (family_ == Family::affine) {
    for (std::size_t i = 0; i < dim_; ++i) {
      for (std::size_t j = 0; j < m; ++j) grad[i * m + j] = g[i] * z[j];
      grad[dim_ * m + i] = g[i];
    }
    return grad;
  }

  const double* w1 = params_.data();
  const double* b1 = w1 + hidden_ * m;
  const double* w2 = b1 + hidden_;
  Vec h(hidden_);
  for (std::size_t k = 0; k < hidden_; ++k) {
    double acc = b1[k];
    for (std::size_t j = 0; j < m; ++j) acc += w1[k * m + j] * z[j];
    h[k] = std::tanh(acc);
  }
  double* gw1 = grad.data();
  double* gb1 = gw1 + hidden_ * m;
  double* gw2 = gb1 + hidden_;
  double* gb2 = gw2 + dim_ * hidden_;
  for (std::size_t i = 0; i < dim_; ++i) {
    gb2[i] = g[i];
    for (std::size_t k = 0; k < hidden_; ++k) gw2[i * hidden_ + k] = g[i] * h[k];
  }
  for (std::size_t k = 0; k < hidden_; ++k) {
    double back = 0.0;
    for (std::size_t i = 0; i < dim_; ++i) back += g[i] * w2[i * hidden_ + k];
    const double delta = back * (1.0 - h[k] * h[k]);
    gb1[k] = delta;
    for (std::size_t j = 0; j < m; ++j) gw1[k * m + j] = delta * z[j];
  }
  return grad;
}

Vec GaussianPolicy::sample(const State& s, std::mt19937_64& rng) const {
  Vec a = mean(s);
  const double sd = sigma(s.steps_left);
  if (sd > 0.0) {
    std::normal_distribution<double> normal(0.0, sd);
    for (double& x : a) x += normal(rng);
  }
  return a;
}

void GaussianPolicy::save(std::ostream& out) const {
  out << kCheckpointMagic << ' ' << kCheckpointVersion << '\n';
  out << "family " << family_name(family_) << '\n';
  out << "dims " << dim_ << ' ' << context_dim_ << ' ' << hidden_ << ' ' << horizon() << '\n';
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  out << "sigma";
  for (double s : sigma_) out << ' ' << s;
  out << "\nparams " << params_.size() << '\n';
  for (double p : params_) out << p << '\n';
}

GaussianPolicy GaussianPolicy::load(std::istream& in) {
  auto expect = [&](const std::string& word) {
    std::string got;
    if (!(in >> got) || got != word) throw std::runtime_error("checkpoint: expected \"" + word + "\"");
  };
  expect(kCheckpointMagic);
  int version = 0;
  if (!(in >> version) || version != kCheckpointVersion) {
    throw std::runtime_error("checkpoint: unsupported format version " + std::to_string(version));
  }
  expect("family");
  std::string fam;
  in >> fam;
  expect("dims");
  std::size_t dim = 0, ctx = 0, hidden = 0;
  int horizon = 0;
  if (!(in >> dim >> ctx >> hidden >> horizon)) throw std::runtime_error("checkpoint: bad dims line");
  GaussianPolicy p = fam == "affine" ? GaussianPolicy(Family::affine, dim, ctx, 0, horizon, 0.0)
                                     : GaussianPolicy(Family::tanh_mlp, dim, ctx, hidden, horizon, 0.0);
  if (fam != "affine" && fam != "tanh_mlp") throw std::runtime_error("checkpoint: unknown family " + fam);
  expect("sigma");
  for (double& s : p.sigma_) {
    if (!(in >> s)) throw std::runtime_error("checkpoint: bad sigma line");
  }
  expect("params");
  std::size_t n = 0;
  in >> n;
  if (n != p.params_.size()) throw std::runtime_error("checkpoint: parameter count does not match dims");
  for (double& v : p.params_) {
    if (!(in >> v)) throw std::runtime_error("checkpoint: truncated parameters");
  }
  return p;
}

// ---------------------------------------------------------------------------
// Rollout

std::vector<Trajectory> rollout(const DenoisingMdp& mdp, const GaussianPolicy& policy, std::size_t n,
                                std::uint64_t seed, unsigned threads) {
  if (n == 0) throw std::invalid_argument("rollout needs n >= 1");
  if (policy.dim() != mdp.dim || policy.context_dim() != mdp.context_dim || policy.horizon() != mdp.horizon) {
    throw std::invalid_argument("policy does not match the MDP");
  }
  std::vector<Trajectory> out(n);
  auto one = [&](std::size_t i) {
    std::mt19937_64 rng(derive_seed(seed, i));
    const Vec c = mdp.sample_context ? mdp.sample_context(rng) : standard_normal(mdp.context_dim, rng);
    State s = mdp.initial(c, rng);
    Trajectory& tr = out[i];
    tr.steps.reserve(static_cast<std::size_t>(mdp.horizon));
    while (s.steps_left >= 1) {
      Vec a = policy.sample(s, rng);
      const double logp = policy.sigma(s.steps_left) > 0.0 ? policy.log_prob(s, a) : 0.0;
      State next = DenoisingMdp::transition(s, a);
      tr.steps.push_back(Step{std::move(s), std::move(a), logp});
      s = std::move(next);
    }
  };
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(n)));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) one(i);
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        for (std::size_t i = t; i < n; i += threads) one(i);
      });
    }
    for (auto& th : pool) th.join();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Update

void TrainerConfig::validate() const {
  if (batch_size == 0) throw std::invalid_argument("batch size must be positive");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw std::invalid_argument("learning rate must be finite and nonnegative");
  }
  if (!(clip_epsilon > 0.0 && clip_epsilon < 1.0)) throw std::invalid_argument("clip epsilon must lie in (0, 1)");
  if (inner_epochs == 0) throw std::invalid_argument("inner epochs must be positive");
}

Vec advantages(std::span<const Trajectory> batch, bool normalize, bool* zero_variance) {
  const double n = static_cast<double>(batch.size());
  double mean = 0.0;
  for (const auto& t : batch) mean += t.reward;
  mean /= n;
  double var = 0.0;
  for (const auto& t : batch) var += (t.reward - mean) * (t.reward - mean);
  const double sd = std::sqrt(var / n);

  Vec adv(batch.size());
  const bool flat = sd <= 1e-12 * std::max(1.0, std::fabs(mean));
  if (zero_variance) *zero_variance = normalize && flat;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (!normalize) {
      adv[i] = batch[i].reward;
    } else if (flat) {
      adv[i] = 0.0;
    } else {
      adv[i] = (batch[i].reward - mean) / (sd + 1e-8);
    }
  }
  return adv;
}

Vec surrogate_gradient(const GaussianPolicy& policy, std::span<const Trajectory> batch, std::span<const double> adv,
                       double clip_epsilon, SurrogateStats* stats) {
  Vec grad(policy.params().size(), 0.0);
  std::size_t steps = 0, clipped = 0;
  double ratio_sum = 0.0, max_dev = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const double a = adv[i];
    for (const Step& st : batch[i].steps) {
      const double ratio = std::exp(policy.log_prob(st.state, st.action) - st.logp);
      ++steps;
      ratio_sum += ratio;
      max_dev = std::max(max_dev, std::fabs(ratio - 1.0));
      // min(rA, clip(r)A) takes the clipped branch exactly when the ratio has
      // left the trust band in the direction the advantage pushes it.
      const bool clip = (a > 0.0 && ratio > 1.0 + clip_epsilon) || (a < 0.0 && ratio < 1.0 - clip_epsilon);
      if (clip) {
        ++clipped;
        continue;
      }
      if (a == 0.0) continue;
      const Vec g = policy.log_prob_grad(st.state, st.action);
      const double w = a * ratio;
      for (std::size_t k = 0; k < grad.size(); ++k) grad[k] += w * g[k];
    }
  }
  if (steps > 0) {
    for (double& g : grad) g /= static_cast<double>(steps);
  }
  if (stats) {
    stats->mean_ratio = steps ? ratio_sum / static_cast<double>(steps) : 0.0;
    stats->max_ratio_deviation = max_dev;
    stats->clip_fraction = steps ? static_cast<double>(clipped) / static_cast<double>(steps) : 0.0;
  }
  return grad;
}

UpdateDiagnostics update(GaussianPolicy& policy, std::span<const Trajectory> batch, const TrainerConfig& config) {
  if (batch.empty()) throw std::invalid_argument("update needs at least one trajectory");
  config.validate();
  UpdateDiagnostics d;
  const Vec adv = advantages(batch, config.normalize_advantages, &d.zero_variance);

  double mean = 0.0;
  for (const auto& t : batch) mean += t.reward;
  mean /= static_cast<double>(batch.size());
  double var = 0.0;
  for (const auto& t : batch) var += (t.reward - mean) * (t.reward - mean);
  d.mean_reward = mean;
  d.std_reward = std::sqrt(var / static_cast<double>(batch.size()));

  double ratio_sum = 0.0, clip_sum = 0.0;
  for (std::size_t epoch = 0; epoch < config.inner_epochs; ++epoch) {
    SurrogateStats s;
    const Vec g = surrogate_gradient(policy, batch, adv, config.clip_epsilon, &s);
    if (epoch == 0) d.first_epoch_ratio_deviation = s.max_ratio_deviation;
    ratio_sum += s.mean_ratio;
    clip_sum += s.clip_fraction;
    Vec& theta = policy.params();
    for (std::size_t k = 0; k < theta.size(); ++k) theta[k] += config.learning_rate * g[k];
  }
  d.mean_ratio = ratio_sum / static_cast<double>(config.inner_epochs);
  d.clip_fraction = clip_sum / static_cast<double>(config.inner_epochs);
  return d;
}

BatchRewardFn per_trajectory(RewardFn fn) {
  return [fn = std::move(fn)](std::span<const Trajectory> batch) {
    Vec r(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) r[i] = fn(batch[i].terminal(), batch[i].context());
    return r;
  };
}

TrainResult train(const DenoisingMdp& mdp, GaussianPolicy policy, const BatchRewardFn& reward,
                  const TrainerConfig& config, const std::function<void(const CurvePoint&)>& on_update) {
  config.validate();
  TrainResult result{{}, std::move(policy), 0};
  result.curve.reserve(config.max_updates);
  for (std::size_t u = 0; u < config.max_updates; ++u) {
    auto batch = rollout(mdp, result.policy, config.batch_size, derive_seed(config.seed, u), config.threads);
    const Vec r = reward(batch);
    if (r.size() != batch.size()) throw TrainingError("reward function returned the wrong number of rewards");
    for (std::size_t i = 0; i < batch.size(); ++i) batch[i].reward = r[i];
    const UpdateDiagnostics d = update(result.policy, batch, config);
    if (!std::isfinite(d.mean_reward)) {
      throw TrainingError("mean reward diverged at update " + std::to_string(u));
    }
    if (d.zero_variance) ++result.zero_variance_updates;
    CurvePoint p{u, d.mean_reward, d.std_reward, d.clip_fraction};
    result.curve.push_back(p);
    if (on_update) on_update(p);
  }
  return result;
}

void write_curve_csv(std::ostream& out, std::span<const CurvePoint> curve) {
  out << "update,mean_reward,std_reward,clip_fraction\n";
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (const auto& p : curve) {
    out << p.update << ',' << p.mean_reward << ',' << p.std_reward << ',' << p.clip_fraction << '\n';
  }
}

double quadratic_reward(const Vec& terminal, const Vec& context) {
  double sq = 0.0;
  for (std::size_t i = 0; i < terminal.size(); ++i) sq += (terminal[i] - context[i]) * (terminal[i] - context[i]);
  return -sq;
}

Vec smoothed_rewards(std::span<const CurvePoint> curve, std::size_t window) {
  if (window == 0) throw std::invalid_argument("window must be positive");
  Vec out(curve.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < curve.size(); ++i) {
    acc += curve[i].mean_reward;
    if (i >= window) acc -= curve[i - window].mean_reward;
    out[i] = acc / static_cast<double>(std::min(window, i + 1));
  }
  return out;
}

}  // namespace kpigen::ddpo
