#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "kpigen/ddpo.hpp"

using namespace kpigen::ddpo;

namespace {

Vec random_vec(std::size_t n, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> d(0.0, scale);
  Vec v(n);
  for (double& x : v) x = d(rng);
  return v;
}

State random_state(const GaussianPolicy& p, std::mt19937_64& rng) {
  State s;
  s.x = random_vec(p.dim(), rng);
  s.context = random_vec(p.context_dim(), rng);
  s.steps_left = 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(p.horizon()));
  return s;
}

double norm(const Vec& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

// Central finite differences of log_prob in every parameter.
Vec fd_grad(GaussianPolicy p, const State& s, const Vec& a, double h = 1e-5) {
  Vec g(p.params().size());
  for (std::size_t k = 0; k < g.size(); ++k) {
    const double orig = p.params()[k];
    p.params()[k] = orig + h;
    const double up = p.log_prob(s, a);
    p.params()[k] = orig - h;
    const double down = p.log_prob(s, a);
    p.params()[k] = orig;
    g[k] = (up - down) / (2.0 * h);
  }
  return g;
}

double rel_error(const Vec& a, const Vec& b) {
  Vec d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  return norm(d) / std::max({norm(a), norm(b), 1e-12});
}

// Mean clipped surrogate, evaluated directly.
double surrogate_value(const GaussianPolicy& p, std::span<const Trajectory> batch, const Vec& adv, double eps) {
  double total = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    for (const auto& st : batch[i].steps) {
      const double r = std::exp(p.log_prob(st.state, st.action) - st.logp);
      total += std::min(r * adv[i], std::clamp(r, 1.0 - eps, 1.0 + eps) * adv[i]);
      ++n;
    }
  }
  return total / static_cast<double>(n);
}

GaussianPolicy random_policy(bool mlp, std::mt19937_64& rng) {
  auto p = mlp ? GaussianPolicy::tanh_mlp(2, 2, 8, 5, 0.3, rng()) : GaussianPolicy::affine(2, 2, 5, 0.3);
  for (double& x : p.params()) x += 0.3 * std::normal_distribution<double>(0.0, 1.0)(rng);
  return p;
}

}  // namespace

TEST_SUITE("ddpo") {

TEST_CASE("log-prob gradient matches central finite differences") {
  std::mt19937_64 rng(99);
  for (bool mlp : {false, true}) {
    double worst = 0.0;
    for (int probe = 0; probe < 100; ++probe) {
      const auto p = random_policy(mlp, rng);
      const State s = random_state(p, rng);
      Vec a = p.mean(s);
      for (double& x : a) x += std::normal_distribution<double>(0.0, 0.5)(rng);
      worst = std::max(worst, rel_error(p.log_prob_grad(s, a), fd_grad(p, s, a)));
    }
    INFO("family " << (mlp ? "tanh_mlp" : "affine") << " worst relative error " << worst);
    CHECK(worst <= 1e-5);
  }
}

TEST_CASE("gradient vanishes when the action equals the mean") {
  std::mt19937_64 rng(3);
  for (bool mlp : {false, true}) {
    const auto p = random_policy(mlp, rng);
    const State s = random_state(p, rng);
    for (double g : p.log_prob_grad(s, p.mean(s))) CHECK(g == 0.0);
  }
}

TEST_CASE("one-dimensional bias derivative has the closed form (a - mu) / sigma^2") {
  auto p = GaussianPolicy::affine(1, 0, 1, 0.5);
  p.params() = {0.3, -0.2, 0.7};  // w_x, w_t, b
  const State s{{}, 1, {2.0}};
  const double mu = 0.3 * 2.0 - 0.2 * 1.0 + 0.7;
  CHECK(p.mean(s)[0] == doctest::Approx(mu));
  const double a = 1.9;
  const Vec g = p.log_prob_grad(s, {a});
  CHECK(g[2] == doctest::Approx((a - mu) / 0.25));
  CHECK(g[0] == doctest::Approx((a - mu) / 0.25 * 2.0));
  CHECK(p.log_prob(s, {a}) ==
        doctest::Approx(-0.5 * std::pow((a - mu) / 0.5, 2) - std::log(0.5) - 0.5 * std::log(2 * M_PI)));
}

TEST_CASE("sigma = 0 with T = 1 is deterministic") {
  DenoisingMdp mdp{1, 0, 1, {}};
  auto p = GaussianPolicy::affine(1, 0, 1, 0.0);
  p.params() = {0.5, 0.0, 0.25};
  const auto a = rollout(mdp, p, 8, 1);
  const auto b = rollout(mdp, p, 8, 2);
  for (std::size_t i = 0; i < a.size(); ++i) {
    REQUIRE(a[i].steps.size() == 1);
    CHECK(a[i].terminal()[0] == doctest::Approx(0.5 * a[i].steps[0].state.x[0] + 0.25));
    CHECK(a[i].steps[0].logp == 0.0);
  }
  CHECK(a[0].terminal() != b[0].terminal());  // only x_T differs between seeds
  CHECK_THROWS_AS(p.log_prob_grad(a[0].steps[0].state, a[0].terminal()), std::invalid_argument);
}

TEST_CASE("transition is pure and trajectories have T steps") {
  const State s{{1.0, 2.0}, 3, {0.5, 0.5}};
  const State copy = s;
  const State n = DenoisingMdp::transition(s, {9.0, 8.0});
  CHECK(s == copy);
  CHECK(n == State{{1.0, 2.0}, 2, {9.0, 8.0}});
  CHECK(DenoisingMdp::transition(s, {9.0, 8.0}) == n);

  DenoisingMdp mdp;
  const auto p = GaussianPolicy::affine(2, 2, 5, 0.1);
  for (const auto& t : rollout(mdp, p, 10, 4)) {
    REQUIRE(t.steps.size() == 5);
    for (std::size_t k = 0; k < 5; ++k) {
      CHECK(t.steps[k].state.steps_left == 5 - static_cast<int>(k));
      if (k > 0) CHECK(t.steps[k].state.x == t.steps[k - 1].action);
      CHECK(t.steps[k].state.context == t.context());
    }
  }
}

TEST_CASE("rollouts are reproducible and independent of thread count") {
  DenoisingMdp mdp;
  std::mt19937_64 rng(1);
  const auto p = random_policy(true, rng);
  const auto a = rollout(mdp, p, 33, 77, 1);
  const auto b = rollout(mdp, p, 33, 77, 3);
  const auto c = rollout(mdp, p, 33, 78, 1);
  REQUIRE(a.size() == 33);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].terminal() == b[i].terminal());
    CHECK(a[i].steps[2].logp == b[i].steps[2].logp);
  }
  CHECK(a[0].terminal() != c[0].terminal());
}

TEST_CASE("zero-initialized affine policy: terminal draws are N(0, sigma^2)") {
  DenoisingMdp mdp;
  const double sigma = 0.1;
  const auto p = GaussianPolicy::affine(2, 2, 5, sigma);
  const std::size_t n = 100000;
  const auto ts = rollout(mdp, p, n, 2024);
  for (std::size_t d = 0; d < 2; ++d) {
    double m = 0.0, m2 = 0.0;
    for (const auto& t : ts) {
      m += t.terminal()[d];
      m2 += t.terminal()[d] * t.terminal()[d];
    }
    m /= static_cast<double>(n);
    const double var = m2 / static_cast<double>(n) - m * m;
    CHECK(std::fabs(m) <= 4.0 * sigma / std::sqrt(static_cast<double>(n)));
    // Var of the sample variance is 2 sigma^4 / n.
    CHECK(std::fabs(var - sigma * sigma) <= 4.0 * sigma * sigma * std::sqrt(2.0 / static_cast<double>(n)));
  }
}

TEST_CASE("recorded log-probs reproduce: first-epoch ratios are 1") {
  DenoisingMdp mdp;
  std::mt19937_64 rng(6);
  for (bool mlp : {false, true}) {
    auto p = random_policy(mlp, rng);
    auto batch = rollout(mdp, p, 64, 5);
    for (const auto& t : batch)
      for (const auto& st : t.steps) CHECK(std::fabs(p.log_prob(st.state, st.action) - st.logp) <= 1e-9);
    for (auto& t : batch) t.reward = quadratic_reward(t.terminal(), t.context());
    TrainerConfig cfg;
    cfg.inner_epochs = 3;
    const auto d = update(p, batch, cfg);
    CHECK(d.first_epoch_ratio_deviation <= 1e-9);
  }
}

TEST_CASE("advantage normalization") {
  std::mt19937_64 rng(12);
  std::vector<Trajectory> batch(50);
  for (auto& t : batch) t.reward = std::normal_distribution<double>(3.0, 7.0)(rng);
  bool flat = true;
  const Vec a = advantages(batch, true, &flat);
  CHECK_FALSE(flat);
  double m = 0.0, v = 0.0;
  for (double x : a) m += x;
  m /= static_cast<double>(a.size());
  for (double x : a) v += (x - m) * (x - m);
  CHECK(std::fabs(m) <= 1e-9);
  CHECK(std::fabs(std::sqrt(v / static_cast<double>(a.size())) - 1.0) <= 1e-6);

  const Vec raw = advantages(batch, false);
  CHECK(raw[7] == batch[7].reward);

  for (auto& t : batch) t.reward = 4.2;
  const Vec z = advantages(batch, true, &flat);
  CHECK(flat);
  for (double x : z) CHECK(x == 0.0);
}

TEST_CASE("surrogate gradient: clipping arithmetic") {
  auto p = GaussianPolicy::affine(1, 0, 1, 0.5);
  p.params() = {0.2, 0.1, -0.3};
  const State s{{}, 1, {1.0}};
  const Vec a{0.4};
  // Old log-prob chosen so that the ratio is exactly 1.5.
  Trajectory t{{Step{s, a, p.log_prob(s, a) - std::log(1.5)}}, 0.0};
  const std::vector<Trajectory> batch{t};
  const Vec g = p.log_prob_grad(s, a);

  SurrogateStats st;
  const Vec pos = surrogate_gradient(p, batch, Vec{1.0}, 0.2, &st);
  CHECK(st.mean_ratio == doctest::Approx(1.5));
  CHECK(st.clip_fraction == 1.0);
  for (double x : pos) CHECK(x == 0.0);

  const Vec neg = surrogate_gradient(p, batch, Vec{-2.0}, 0.2, &st);
  CHECK(st.clip_fraction == 0.0);
  for (std::size_t k = 0; k < g.size(); ++k) CHECK(neg[k] == doctest::Approx(-2.0 * 1.5 * g[k]));

  // With a wide band nothing clips.
  const Vec wide = surrogate_gradient(p, batch, Vec{1.0}, 0.6, &st);
  for (std::size_t k = 0; k < g.size(); ++k) CHECK(wide[k] == doctest::Approx(1.5 * g[k]));
}

TEST_CASE("surrogate gradient matches finite differences of the clipped objective") {
  std::mt19937_64 rng(21);
  DenoisingMdp mdp;
  for (bool mlp : {false, true}) {
    const auto p = random_policy(mlp, rng);
    auto batch = rollout(mdp, p, 16, 8);
    std::uniform_real_distribution<double> shift(-0.6, 0.6);
    for (auto& t : batch)
      for (auto& st : t.steps) st.logp += shift(rng);  // ratios spread inside and outside the band
    Vec adv(batch.size());
    for (double& x : adv) x = std::normal_distribution<double>(0.0, 1.0)(rng);
    const Vec g = surrogate_gradient(p, batch, adv, 0.2);
    Vec fd(g.size());
    GaussianPolicy q = p;
    const double h = 1e-6;
    for (std::size_t k = 0; k < g.size(); ++k) {
      const double orig = q.params()[k];
      q.params()[k] = orig + h;
      const double up = surrogate_value(q, batch, adv, 0.2);
      q.params()[k] = orig - h;
      const double down = surrogate_value(q, batch, adv, 0.2);
      q.params()[k] = orig;
      fd[k] = (up - down) / (2.0 * h);
    }
    CHECK(rel_error(g, fd) <= 1e-5);
  }
}

TEST_CASE("constant reward leaves the policy unchanged") {
  DenoisingMdp mdp;
  std::mt19937_64 rng(2);
  auto p = random_policy(false, rng);
  const Vec before = p.params();
  auto batch = rollout(mdp, p, 32, 1);
  for (auto& t : batch) t.reward = -1.0;
  TrainerConfig cfg;
  const auto d = update(p, batch, cfg);
  CHECK(d.zero_variance);
  CHECK(p.params() == before);

  auto res = train(mdp, GaussianPolicy::affine(2, 2, 5, 0.1), per_trajectory([](const Vec&, const Vec&) { return 1.0; }),
                   TrainerConfig{16, 0.1, 0.2, 1, true, 0, 5, 1});
  CHECK(res.zero_variance_updates == 5);
  for (double x : res.policy.params()) CHECK(x == 0.0);
}

TEST_CASE("learning rate 0 never moves the parameters") {
  DenoisingMdp mdp;
  TrainerConfig cfg;
  cfg.learning_rate = 0.0;
  cfg.max_updates = 20;
  cfg.batch_size = 16;
  const auto res = train(mdp, GaussianPolicy::affine(2, 2, 5, 0.1), per_trajectory(quadratic_reward), cfg);
  for (double x : res.policy.params()) CHECK(x == 0.0);
  CHECK(res.curve.size() == 20);
}

TEST_CASE("training is reproducible under a seed") {
  DenoisingMdp mdp;
  TrainerConfig cfg;
  cfg.max_updates = 30;
  cfg.batch_size = 16;
  cfg.seed = 11;
  const auto a = train(mdp, GaussianPolicy::affine(2, 2, 5, 0.1), per_trajectory(quadratic_reward), cfg);
  cfg.threads = 2;
  const auto b = train(mdp, GaussianPolicy::affine(2, 2, 5, 0.1), per_trajectory(quadratic_reward), cfg);
  CHECK(a.policy.params() == b.policy.params());
  std::ostringstream ca, cb;
  write_curve_csv(ca, a.curve);
  write_curve_csv(cb, b.curve);
  CHECK(ca.str() == cb.str());
  CHECK(ca.str().rfind("update,mean_reward,std_reward,clip_fraction\n", 0) == 0);
}

TEST_CASE("non-finite rewards stop training") {
  DenoisingMdp mdp;
  TrainerConfig cfg;
  cfg.max_updates = 5;
  cfg.batch_size = 4;
  const auto nan_reward = per_trajectory([](const Vec&, const Vec&) { return std::numeric_limits<double>::quiet_NaN(); });
  CHECK_THROWS_AS(train(mdp, GaussianPolicy::affine(2, 2, 5, 0.1), nan_reward, cfg), TrainingError);
}

TEST_CASE("config validation") {
  TrainerConfig c;
  CHECK_NOTHROW(c.validate());
  c.clip_epsilon = 1.0;
  CHECK_THROWS(c.validate());
  c = {};
  c.learning_rate = -1.0;
  CHECK_THROWS(c.validate());
  c = {};
  c.batch_size = 0;
  CHECK_THROWS(c.validate());
  c = {};
  c.inner_epochs = 0;
  CHECK_THROWS(c.validate());
}

TEST_CASE("checkpoint round trip") {
  std::mt19937_64 rng(10);
  for (bool mlp : {false, true}) {
    auto p = random_policy(mlp, rng);
    p.set_sigma(3, 0.05);
    std::stringstream ss;
    p.save(ss);
    const auto q = GaussianPolicy::load(ss);
    CHECK(q.family() == p.family());
    CHECK(q.params() == p.params());
    CHECK(q.sigma(3) == 0.05);
    CHECK(q.sigma(1) == p.sigma(1));
    CHECK(q.hidden() == p.hidden());
  }
  std::istringstream bad("kpigen-policy 2\n");
  CHECK_THROWS(GaussianPolicy::load(bad));
  std::istringstream junk("hello");
  CHECK_THROWS(GaussianPolicy::load(junk));
}

TEST_CASE("smoothing is a trailing mean") {
  std::vector<CurvePoint> c;
  for (int i = 0; i < 5; ++i) c.push_back({static_cast<std::size_t>(i), static_cast<double>(i), 0, 0});
  const Vec s = smoothed_rewards(c, 3);
  CHECK(s == Vec{0.0, 0.5, 1.0, 2.0, 3.0});
  CHECK(quadratic_reward({1.0, 2.0}, {0.0, 0.0}) == -5.0);
}

}  // TEST_SUITE
