#include <doctest.h>

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "ratchet/ppo.hpp"

using namespace ratchet;
using nn::Tensor;

namespace {

std::vector<double> uniform_vec(std::size_t n, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

// Direct sums, no recursion.
double brute_return(const std::vector<double>& r, const std::vector<double>& v, double gamma, std::size_t t) {
  const std::size_t T = r.size();
  double g = 0.0;
  for (std::size_t l = 0; t + l < T; ++l) g += std::pow(gamma, double(l)) * r[t + l];
  return g + std::pow(gamma, double(T - t)) * v[T];
}

double brute_gae(const std::vector<double>& r, const std::vector<double>& v, double gamma, double lambda,
                 std::size_t t) {
  double a = 0.0;
  for (std::size_t l = 0; t + l < r.size(); ++l) {
    const std::size_t k = t + l;
    a += std::pow(gamma * lambda, double(l)) * (r[k] + gamma * v[k + 1] - v[k]);
  }
  return a;
}

PpoConfig small_config() {
  PpoConfig cfg;
  cfg.traj_len = 40;
  cfg.trajectories = 8;
  cfg.batch = 64;
  cfg.epochs = 2;
  cfg.iters_pi = 10;
  cfg.iters_v = 10;
  return cfg;
}

ArchConfig small_arch(ArchKind kind, std::size_t n, std::size_t out_dim) {
  ArchConfig a;
  a.kind = kind;
  a.n = n;
  a.hidden = 8;
  a.embed = 4;
  a.out_dim = out_dim;
  return a;
}

}  // namespace

TEST_CASE("returns and advantages against direct sums (property)") {
  Rng rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t T = 1 + rng.bits() % 30;
    const auto r = uniform_vec(T, rng);
    const auto v = uniform_vec(T + 1, rng);
    const double gamma = rng.uniform(0.5, 1.0), lambda = rng.uniform(0.0, 1.0);
    const auto g = estimated_return(r, v, gamma);
    const auto delta = td_residuals(r, v, gamma);
    const auto a = gae(delta, gamma, lambda);
    const auto a1 = gae(delta, gamma, 1.0);
    const auto a0 = gae(delta, gamma, 0.0);
    REQUIRE(g.size() == T);
    REQUIRE(a.size() == T);
    for (std::size_t t = 0; t < T; ++t) {
      CHECK(g[t] == doctest::Approx(brute_return(r, v, gamma, t)).epsilon(1e-12));
      CHECK(a[t] == doctest::Approx(brute_gae(r, v, gamma, lambda, t)).epsilon(1e-12));
      CHECK(std::abs(a1[t] - (g[t] - v[t])) < 1e-9);
      CHECK(a0[t] == delta[t]);
    }
  }
}

TEST_CASE("return and residual examples") {
  const std::vector<double> r{1.0, 2.0};
  const std::vector<double> v{0.5, 0.25, 4.0};
  const auto g = estimated_return(r, v, 0.5);
  CHECK(g[1] == 2.0 + 0.5 * 4.0);
  CHECK(g[0] == 1.0 + 0.5 * 2.0 + 0.25 * 4.0);
  const auto d = td_residuals(r, v, 0.5);
  CHECK(d[0] == 1.0 + 0.5 * 0.25 - 0.5);
  CHECK(d[1] == 2.0 + 0.5 * 4.0 - 0.25);
  CHECK_THROWS_AS(estimated_return(r, std::vector<double>{1.0, 2.0}, 0.5), std::invalid_argument);
}

TEST_CASE("clip function") {
  CHECK(clip_advantage(0.2, 2.0) == doctest::Approx(2.4));
  CHECK(clip_advantage(0.2, -2.0) == doctest::Approx(-1.6));
  CHECK(clip_advantage(0.2, 0.0) == 0.0);
}

TEST_CASE("clipped objective at the old policy is the mean advantage") {
  Rng rng(32);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.bits() % 50;
    const auto adv = uniform_vec(n, rng, -3.0, 3.0);
    const auto lr = Tensor::zeros({n}, true);
    const auto obj = clipped_objective(lr, adv, 0.2);
    const double mean = std::accumulate(adv.begin(), adv.end(), 0.0) / double(n);
    CHECK(std::abs(obj.item() - mean) < 1e-12);
    // At ratio 1 the unclipped branch is active: d obj / d log_ratio_i = A_i / n,
    // the plain policy-gradient weight.
    obj.backward();
    for (std::size_t i = 0; i < n; ++i) CHECK(lr.grad()[i] == doctest::Approx(adv[i] / double(n)).epsilon(1e-12));
  }
}

TEST_CASE("clipped objective saturates outside the trust region") {
  const std::vector<double> adv{1.0, -1.0};
  const auto far = Tensor::from({2}, {std::log(2.0), std::log(0.5)}, true);
  const auto obj = clipped_objective(far, adv, 0.2);
  CHECK(obj.item() == doctest::Approx((1.2 - 0.8) / 2));
  obj.backward();
  CHECK(far.grad()[0] == 0.0);
  CHECK(far.grad()[1] == 0.0);

  // Moving against the advantage is never clipped.
  const auto against = Tensor::from({2}, {std::log(0.5), std::log(2.0)}, true);
  CHECK(clipped_objective(against, adv, 0.2).item() == doctest::Approx((0.5 - 2.0) / 2));
}

TEST_CASE("sample KL estimate converges to the categorical KL") {
  Rng rng(33);
  const double p = 0.3, q = 0.45;
  const std::size_t n = 200000;
  std::vector<double> old_lp(n), new_lp(n);
  for (std::size_t i = 0; i < n; ++i) {
    const bool on = rng.uniform() < p;
    old_lp[i] = std::log(on ? p : 1 - p);
    new_lp[i] = std::log(on ? q : 1 - q);
  }
  const double exact = p * std::log(p / q) + (1 - p) * std::log((1 - p) / (1 - q));
  CHECK(kld_estimate(old_lp, new_lp) == doctest::Approx(exact).epsilon(0.05));
  CHECK(kld_estimate(old_lp, old_lp) == 0.0);
}

TEST_CASE("batch shapes by particle count") {
  const std::vector<std::tuple<std::size_t, std::size_t, std::size_t>> table{
      {1, 1024, 4096}, {2, 512, 4096}, {4, 256, 4096}, {8, 128, 4096}, {16, 64, 2048},
      {32, 32, 1024},  {64, 16, 512},  {128, 8, 256},  {512, 8, 256},  {3, 512, 4096}};
  for (const auto& [n, m, b] : table) {
    CAPTURE(n);
    CHECK(batch_shape_for(n).trajectories == m);
    CHECK(batch_shape_for(n).batch == b);
  }
  const auto cfg = PpoConfig::for_particles(64);
  CHECK(cfg.trajectories == 16);
  CHECK(cfg.batch == 512);
}

TEST_CASE("config validation") {
  PpoConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.gamma = 1.5;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = PpoConfig{};
  cfg.clip_eps = 0.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = PpoConfig{};
  cfg.traj_len = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("rollouts are reproducible and well formed") {
  Rng rng(34);
  EnvSpec env;
  env.n = 3;
  env.tau = 0.003;
  const auto cfg = small_config();
  for (ArchKind kind : {ArchKind::deepsets, ArchKind::rnn}) {
    const Network policy(small_arch(kind, 3, 2), rng);
    const Network value(small_arch(kind, 3, 1), rng);
    const auto a = collect(env, policy, value, cfg, 5);
    const auto b = collect(env, policy, value, cfg, 5);
    REQUIRE(a.size() == cfg.trajectories);
    for (std::size_t m = 0; m < a.size(); ++m) {
      const auto& r = a[m];
      CHECK(r.steps == cfg.traj_len);
      CHECK(r.d == 3);
      CHECK(r.psi.size() == (cfg.traj_len + 1) * 3 * 2);
      CHECK(r.history.size() == (cfg.traj_len + 1) * 3);
      CHECK(r.values.size() == cfg.traj_len + 1);
      CHECK(r.rewards == b[m].rewards);
      CHECK(r.actions == b[m].actions);
      for (double lp : r.old_log_prob) CHECK(lp <= 0.0);
      CHECK(r.displacement == doctest::Approx(std::accumulate(r.rewards.begin(), r.rewards.end(), 0.0)));
      // The pending queue of step t + 1 is that of step t shifted by one decision.
      for (std::size_t t = 0; t + 1 <= cfg.traj_len; ++t) {
        CHECK(r.history[(t + 1) * 3 + 2] == r.actions[t]);
        CHECK(r.history[(t + 1) * 3] == r.history[t * 3 + 1]);
      }
    }
    CHECK(a[0].rewards != a[1].rewards);
  }
}

TEST_CASE("training set normalizes advantages") {
  Rng rng(35);
  EnvSpec env;
  env.n = 2;
  const auto cfg = small_config();
  const Network policy(small_arch(ArchKind::deepsets, 2, 2), rng);
  const Network value(small_arch(ArchKind::deepsets, 2, 1), rng);
  const auto rollouts = collect(env, policy, value, cfg, 6);
  const auto set = build_training_set(rollouts, cfg);
  CHECK(set.size == cfg.traj_len * cfg.trajectories);
  double mean = 0.0, sq = 0.0;
  for (double a : set.advantages) mean += a;
  mean /= double(set.size);
  for (double a : set.advantages) sq += (a - mean) * (a - mean);
  CHECK(std::abs(mean) < 1e-12);
  CHECK(std::sqrt(sq / double(set.size)) == doctest::Approx(1.0).epsilon(1e-9));
  const auto lp = action_log_probs(policy, set);
  for (std::size_t i = 0; i < set.size; ++i) CHECK(lp[i] == doctest::Approx(set.old_log_prob[i]).epsilon(1e-12));
}

TEST_CASE("policy update: zero learning rate and early stopping") {
  Rng rng(36);
  EnvSpec env;
  env.n = 2;
  auto cfg = small_config();
  const Network value(small_arch(ArchKind::deepsets, 2, 1), rng);
  const Network policy(small_arch(ArchKind::deepsets, 2, 2), rng);
  const auto set = build_training_set(collect(env, policy, value, cfg, 7), cfg);

  SUBCASE("lr = 0 runs every iteration with zero divergence") {
    nn::Adam opt(policy.parameters(), {.lr = 0.0});
    Rng urng(1);
    const auto stats = update_policy(policy, set, cfg, opt, urng);
    CHECK(stats.steps == cfg.iters_pi);
    CHECK_FALSE(stats.early_stopped);
    CHECK(stats.kld == 0.0);
  }
  SUBCASE("a large step with a tiny target stops early") {
    cfg.d_targ = 1e-7;
    cfg.iters_pi = 50;
    const Network p = policy.clone();
    nn::Adam opt(p.parameters(), {.lr = 0.05});
    Rng urng(2);
    const auto stats = update_policy(p, set, cfg, opt, urng);
    CHECK(stats.early_stopped);
    CHECK(stats.steps < cfg.iters_pi);
    REQUIRE(stats.kld_trace.size() == stats.steps);
    CHECK(stats.kld_trace.back() > 1.5 * cfg.d_targ);
    for (std::size_t i = 0; i + 1 < stats.kld_trace.size(); ++i) CHECK(stats.kld_trace[i] <= 1.5 * cfg.d_targ);
  }
  SUBCASE("the objective improves on a few steps") {
    const Network p = policy.clone();
    nn::Adam opt(p.parameters(), {.lr = 1e-2});
    cfg.d_targ = 10.0;
    Rng urng(3);
    const auto stats = update_policy(p, set, cfg, opt, urng);
    CHECK(stats.steps == cfg.iters_pi);
    CHECK(stats.kld > 0.0);
  }
}

TEST_CASE("value update reduces the regression error") {
  Rng rng(37);
  EnvSpec env;
  env.n = 1;
  auto cfg = small_config();
  cfg.iters_v = 100;
  const Network policy(small_arch(ArchKind::mlp, 1, 2), rng);
  const Network value(small_arch(ArchKind::mlp, 1, 1), rng);
  const auto set = build_training_set(collect(env, policy, value, cfg, 8), cfg);
  nn::Adam opt(value.parameters(), {.lr = 1e-2});
  Rng urng(4);
  const auto stats = update_value(value, set, cfg, opt, urng);
  CHECK(stats.steps == cfg.iters_v);
  CHECK(stats.final_mse < stats.initial_mse);
  CHECK(stats.final_mse == doctest::Approx(value_mse(value, set)));
}

TEST_CASE("training is reproducible and records every epoch") {
  EnvSpec env;
  env.n = 2;
  env.tau = 0.002;
  auto cfg = small_config();
  cfg.epochs = 3;
  for (ArchKind kind : {ArchKind::mlp, ArchKind::deepsets, ArchKind::rnn}) {
    CAPTURE(to_string(kind));
    const auto arch = small_arch(kind, 2, 2);
    std::size_t seen = 0;
    const auto a = train(env, arch, cfg, 42, {.on_epoch = [&](const EpochMetrics&) { ++seen; }});
    const auto b = train(env, arch, cfg, 42);
    CHECK(seen == 3);
    REQUIRE(a.metrics.size() == 3);
    CHECK(a.metrics[2].epoch == 2);
    CHECK(serialize_checkpoint(a.final_checkpoint) == serialize_checkpoint(b.final_checkpoint));
    CHECK(a.final_checkpoint.epoch == 3);
    CHECK(has_network(a.final_checkpoint, kValuePrefix));
    const auto best = std::max_element(a.metrics.begin(), a.metrics.end(), [](auto& x, auto& y) {
      return x.mean_reward < y.mean_reward;
    });
    CHECK(a.best_checkpoint.epoch == static_cast<std::int64_t>(best->epoch));
    for (const auto& m : a.metrics) {
      CHECK(m.mean_current == doctest::Approx(m.mean_reward / env.params.dt));
      CHECK(m.policy_steps >= 1);
      CHECK(m.policy_steps <= cfg.iters_pi);
    }
    const auto c = train(env, arch, cfg, 43);
    CHECK(serialize_checkpoint(c.final_checkpoint) != serialize_checkpoint(a.final_checkpoint));
  }
}

TEST_CASE("training rejects bad inputs") {
  EnvSpec env;
  env.n = 2;
  CHECK_THROWS_AS(train(env, small_arch(ArchKind::rnn, 2, 2), small_config(), 1), std::invalid_argument);
  auto cfg = small_config();
  cfg.lambda = 0.0 - 1.0;
  CHECK_THROWS_AS(train(env, small_arch(ArchKind::mlp, 2, 2), cfg, 1), std::invalid_argument);
}
