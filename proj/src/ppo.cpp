#include "ratchet/ppo.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "ratchet/format.hpp"
#include "ratchet/policies.hpp"

namespace ratchet {
namespace {

constexpr std::size_t kEvalChunk = 256;

void check_arch(const ArchConfig& arch, const EnvSpec& env) {
  if (arch.kind == ArchKind::mlp && arch.n != env.n) {
    throw std::invalid_argument("ppo: mlp network built for N=" + std::to_string(arch.n) + " but environment has N=" +
                                std::to_string(env.n));
  }
  if (arch.kind == ArchKind::rnn && delay_steps(env.tau, env.params.dt) == 0) {
    throw std::invalid_argument("ppo: rnn network needs a positive feedback delay");
  }
}

void require_finite(std::span<const double> values, const char* what, std::size_t context) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw std::runtime_error(std::string(what) + ": non-finite network output at step " + std::to_string(context) +
                               ", element " + std::to_string(i));
    }
  }
}

// Fills rollout values V(s_1..s_{T+1}) in chunks of rows.
void fill_values(std::vector<Rollout>& rollouts, const Network& value) {
  nn::NoGradGuard no_grad;
  for (Rollout& r : rollouts) {
    const std::size_t rows = r.steps + 1;
    r.values.assign(rows, 0.0);
    for (std::size_t start = 0; start < rows; start += kEvalChunk) {
      const std::size_t count = std::min(kEvalChunk, rows - start);
      const NetInput in{count, r.n, std::span<const double>(r.psi).subspan(start * r.n * 2, count * r.n * 2), r.d,
                        std::span<const Alpha>(r.history).subspan(start * r.d, count * r.d)};
      const nn::Tensor v = value.forward(in);
      require_finite(v.data(), "value network", start);
      std::copy(v.data().begin(), v.data().end(), r.values.begin() + static_cast<std::ptrdiff_t>(start));
    }
  }
}

template <typename Decide>
std::vector<Rollout> run_rollouts(const EnvSpec& env, const PpoConfig& cfg, std::uint64_t seed, Decide&& decide) {
  const std::size_t d = delay_steps(env.tau, env.params.dt);
  const std::size_t m_count = cfg.trajectories;
  const std::size_t steps = cfg.traj_len;
  std::vector<Rng> rngs;
  std::vector<DelayedEnv> envs;
  std::vector<Rollout> rollouts(m_count);
  rngs.reserve(m_count);
  envs.reserve(m_count);
  for (std::size_t m = 0; m < m_count; ++m) {
    rngs.emplace_back(seed, m);
    envs.emplace_back(env.params, uniform_state(env.n, env.params, rngs.back()), env.tau);
    Rollout& r = rollouts[m];
    r.n = env.n;
    r.d = d;
    r.steps = steps;
    r.psi.resize((steps + 1) * env.n * 2);
    r.history.resize((steps + 1) * d);
    r.actions.resize(steps);
    r.old_log_prob.resize(steps);
    r.rewards.resize(steps);
  }
  ObservationBatch obs;
  std::vector<Alpha> actions(m_count);
  std::vector<double> log_probs(m_count);
  for (std::size_t t = 0; t <= steps; ++t) {
    obs.fill(envs);
    for (std::size_t m = 0; m < m_count; ++m) {
      std::copy_n(obs.psi.begin() + static_cast<std::ptrdiff_t>(m * env.n * 2), env.n * 2,
                  rollouts[m].psi.begin() + static_cast<std::ptrdiff_t>(t * env.n * 2));
      std::copy_n(obs.history.begin() + static_cast<std::ptrdiff_t>(m * d), d,
                  rollouts[m].history.begin() + static_cast<std::ptrdiff_t>(t * d));
    }
    if (t == steps) break;
    decide(obs, t, rngs, actions, log_probs);
    for (std::size_t m = 0; m < m_count; ++m) {
      Rollout& r = rollouts[m];
      r.actions[t] = actions[m];
      r.old_log_prob[t] = log_probs[m];
      r.rewards[t] = envs[m].step(actions[m], rngs[m]);
      r.displacement += r.rewards[t];
    }
  }
  return rollouts;
}

std::vector<std::size_t> action_columns(std::span<const Alpha> actions) {
  std::vector<std::size_t> cols(actions.size());
  for (std::size_t i = 0; i < actions.size(); ++i) cols[i] = action_column(actions[i]);
  return cols;
}

// Cycles through a permutation of [0, size), reshuffling at each new pass.
class MiniBatcher {
 public:
  MiniBatcher(std::size_t size, std::size_t batch, Rng& rng)
      : perm_(size), batch_(std::min(batch, size)), pos_(size), rng_(rng) {
    std::iota(perm_.begin(), perm_.end(), std::size_t{0});
  }
  std::span<const std::size_t> next() {
    if (pos_ + batch_ > perm_.size()) {
      std::shuffle(perm_.begin(), perm_.end(), rng_.engine());
      pos_ = 0;
    }
    std::span<const std::size_t> rows(perm_.data() + pos_, batch_);
    pos_ += batch_;
    return rows;
  }

 private:
  std::vector<std::size_t> perm_;
  std::size_t batch_;
  std::size_t pos_;
  Rng& rng_;
};

}  // namespace

BatchShape batch_shape_for(std::size_t n) {
  if (n >= 128) return {8, 256};
  if (n >= 64) return {16, 512};
  if (n >= 32) return {32, 1024};
  if (n >= 16) return {64, 2048};
  if (n >= 8) return {128, 4096};
  if (n >= 4) return {256, 4096};
  if (n >= 2) return {512, 4096};
  return {1024, 4096};
}

PpoConfig PpoConfig::for_particles(std::size_t n) {
  PpoConfig cfg;
  const BatchShape bs = batch_shape_for(n);
  cfg.trajectories = bs.trajectories;
  cfg.batch = bs.batch;
  return cfg;
}

void PpoConfig::validate() const {
  if (traj_len == 0 || epochs == 0 || trajectories == 0 || batch == 0) {
    throw std::invalid_argument("PpoConfig: counts must be positive");
  }
  if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("PpoConfig: gamma must lie in (0, 1]");
  if (!(lambda > 0.0 && lambda <= 1.0)) throw std::invalid_argument("PpoConfig: lambda must lie in (0, 1]");
  if (!(clip_eps > 0.0) || !(d_targ > 0.0)) throw std::invalid_argument("PpoConfig: clip_eps and d_targ must be positive");
  if (!(lr_pi >= 0.0) || !(lr_v >= 0.0)) throw std::invalid_argument("PpoConfig: learning rates must be non-negative");
}

std::vector<Rollout> collect(const EnvSpec& env, const Network& policy, const Network& value, const PpoConfig& cfg,
                             std::uint64_t seed) {
  check_arch(policy.config(), env);
  check_arch(value.config(), env);
  auto rollouts = run_rollouts(env, cfg, seed,
                               [&](const ObservationBatch& obs, std::size_t t, std::vector<Rng>& rngs,
                                   std::vector<Alpha>& actions, std::vector<double>& log_probs) {
                                 nn::NoGradGuard no_grad;
                                 const nn::Tensor lsm = nn::log_softmax(policy.forward(obs.input()), 1);
                                 require_finite(lsm.data(), "policy network", t);
                                 auto lp = lsm.data();
                                 for (std::size_t m = 0; m < actions.size(); ++m) {
                                   const Alpha a = rngs[m].uniform() < std::exp(lp[2 * m]) ? 1 : 0;
                                   actions[m] = a;
                                   log_probs[m] = lp[2 * m + action_column(a)];
                                 }
                               });
  fill_values(rollouts, value);
  return rollouts;
}

std::vector<Rollout> collect_forced(const EnvSpec& env, Alpha alpha, const Network& value, const PpoConfig& cfg,
                                    std::uint64_t seed) {
  auto rollouts = run_rollouts(env, cfg, seed,
                               [alpha](const ObservationBatch&, std::size_t, std::vector<Rng>&,
                                       std::vector<Alpha>& actions, std::vector<double>& log_probs) {
                                 std::fill(actions.begin(), actions.end(), alpha);
                                 std::fill(log_probs.begin(), log_probs.end(), 0.0);
                               });
  fill_values(rollouts, value);
  return rollouts;
}

std::vector<double> estimated_return(std::span<const double> rewards, std::span<const double> values, double gamma) {
  const std::size_t steps = rewards.size();
  if (values.size() != steps + 1) throw std::invalid_argument("estimated_return: need T+1 values");
  std::vector<double> g(steps);
  double next = values[steps];
  for (std::size_t k = steps; k-- > 0;) {
    next = rewards[k] + gamma * next;
    g[k] = next;
  }
  return g;
}

std::vector<double> td_residuals(std::span<const double> rewards, std::span<const double> values, double gamma) {
  const std::size_t steps = rewards.size();
  if (values.size() != steps + 1) throw std::invalid_argument("td_residuals: need T+1 values");
  std::vector<double> delta(steps);
  for (std::size_t k = 0; k < steps; ++k) delta[k] = rewards[k] + gamma * values[k + 1] - values[k];
  return delta;
}

std::vector<double> gae(std::span<const double> deltas, double gamma, double lambda) {
  std::vector<double> adv(deltas.size());
  const double decay = gamma * lambda;
  double next = 0.0;
  for (std::size_t k = deltas.size(); k-- > 0;) {
    next = deltas[k] + decay * next;
    adv[k] = next;
  }
  return adv;
}

double clip_advantage(double eps, double advantage) {
  return advantage >= 0.0 ? (1.0 + eps) * advantage : (1.0 - eps) * advantage;
}

nn::Tensor clipped_objective(const nn::Tensor& log_ratio, std::span<const double> advantages, double eps) {
  if (log_ratio.numel() != advantages.size()) {
    throw std::invalid_argument("clipped_objective: " + std::to_string(log_ratio.numel()) + " ratios vs " +
                                std::to_string(advantages.size()) + " advantages");
  }
  const nn::Shape shape = log_ratio.shape();
  std::vector<double> clipped(advantages.size());
  for (std::size_t i = 0; i < clipped.size(); ++i) clipped[i] = clip_advantage(eps, advantages[i]);
  const nn::Tensor adv = nn::Tensor::from(shape, {advantages.begin(), advantages.end()});
  const nn::Tensor bound = nn::Tensor::from(shape, std::move(clipped));
  return nn::mean(nn::minimum(nn::mul(nn::exp(log_ratio), adv), bound));
}

double kld_estimate(std::span<const double> old_log_prob, std::span<const double> new_log_prob) {
  if (old_log_prob.size() != new_log_prob.size() || old_log_prob.empty()) {
    throw std::invalid_argument("kld_estimate: sample sets differ in size or are empty");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < old_log_prob.size(); ++i) total += old_log_prob[i] - new_log_prob[i];
  return total / static_cast<double>(old_log_prob.size());
}

NetInput TrainingSet::input(std::span<const std::size_t> rows, std::vector<double>& psi_buf,
                            std::vector<Alpha>& hist_buf) const {
  const std::size_t w = n * 2;
  psi_buf.resize(rows.size() * w);
  hist_buf.resize(rows.size() * d);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy_n(psi.begin() + static_cast<std::ptrdiff_t>(rows[i] * w), w,
                psi_buf.begin() + static_cast<std::ptrdiff_t>(i * w));
    std::copy_n(history.begin() + static_cast<std::ptrdiff_t>(rows[i] * d), d,
                hist_buf.begin() + static_cast<std::ptrdiff_t>(i * d));
  }
  return {rows.size(), n, psi_buf, d, hist_buf};
}

TrainingSet build_training_set(std::span<const Rollout> rollouts, const PpoConfig& cfg) {
  if (rollouts.empty()) throw std::invalid_argument("build_training_set: no rollouts");
  TrainingSet set;
  set.n = rollouts.front().n;
  set.d = rollouts.front().d;
  double reward_sum = 0.0;
  for (const Rollout& r : rollouts) {
    const auto g = estimated_return(r.rewards, r.values, cfg.gamma);
    const auto adv = gae(td_residuals(r.rewards, r.values, cfg.gamma), cfg.gamma, cfg.lambda);
    const std::size_t w = set.n * 2;
    set.psi.insert(set.psi.end(), r.psi.begin(), r.psi.begin() + static_cast<std::ptrdiff_t>(r.steps * w));
    set.history.insert(set.history.end(), r.history.begin(),
                       r.history.begin() + static_cast<std::ptrdiff_t>(r.steps * set.d));
    set.actions.insert(set.actions.end(), r.actions.begin(), r.actions.end());
    set.old_log_prob.insert(set.old_log_prob.end(), r.old_log_prob.begin(), r.old_log_prob.end());
    set.advantages.insert(set.advantages.end(), adv.begin(), adv.end());
    set.returns.insert(set.returns.end(), g.begin(), g.end());
    for (double x : r.rewards) reward_sum += x;
  }
  set.size = set.actions.size();
  set.mean_reward = reward_sum / static_cast<double>(set.size);

  double mean = 0.0;
  for (double a : set.advantages) mean += a;
  mean /= static_cast<double>(set.size);
  double var = 0.0;
  for (double a : set.advantages) var += (a - mean) * (a - mean);
  const double sd = std::sqrt(var / static_cast<double>(set.size));
  for (double& a : set.advantages) a = sd > 0.0 ? (a - mean) / sd : a - mean;
  return set;
}

std::vector<double> action_log_probs(const Network& policy, const TrainingSet& set) {
  nn::NoGradGuard no_grad;
  std::vector<double> out(set.size);
  std::vector<std::size_t> rows;
  std::vector<double> psi_buf;
  std::vector<Alpha> hist_buf;
  for (std::size_t start = 0; start < set.size; start += kEvalChunk) {
    const std::size_t count = std::min(kEvalChunk, set.size - start);
    rows.resize(count);
    std::iota(rows.begin(), rows.end(), start);
    const nn::Tensor lsm = nn::log_softmax(policy.forward(set.input(rows, psi_buf, hist_buf)), 1);
    auto lp = lsm.data();
    for (std::size_t i = 0; i < count; ++i) out[start + i] = lp[2 * i + action_column(set.actions[start + i])];
  }
  return out;
}

PolicyUpdateStats update_policy(const Network& policy, const TrainingSet& set, const PpoConfig& cfg, nn::Adam& opt,
                                Rng& rng) {
  PolicyUpdateStats stats;
  MiniBatcher batches(set.size, cfg.batch, rng);
  std::vector<double> psi_buf;
  std::vector<Alpha> hist_buf;
  const double limit = 1.5 * cfg.d_targ;
  for (std::size_t it = 0; it < cfg.iters_pi; ++it) {
    const auto rows = batches.next();
    std::vector<double> old_lp(rows.size());
    std::vector<double> adv(rows.size());
    std::vector<Alpha> acts(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      old_lp[i] = set.old_log_prob[rows[i]];
      adv[i] = set.advantages[rows[i]];
      acts[i] = set.actions[rows[i]];
    }
    const nn::Tensor lsm = nn::log_softmax(policy.forward(set.input(rows, psi_buf, hist_buf)), 1);
    const nn::Tensor new_lp = nn::gather_cols(lsm, action_columns(acts));
    const nn::Tensor log_ratio = nn::sub(new_lp, nn::Tensor::from({rows.size()}, std::move(old_lp)));
    const nn::Tensor objective = clipped_objective(log_ratio, adv, cfg.clip_eps);
    if (!std::isfinite(objective.item())) throw std::runtime_error("update_policy: non-finite objective");
    if (it == 0) stats.first_objective = objective.item();
    const nn::Tensor loss = nn::scale(objective, -1.0);
    opt.zero_grad();
    loss.backward();
    opt.step();
    ++stats.steps;
    stats.kld = kld_estimate(set.old_log_prob, action_log_probs(policy, set));
    stats.kld_trace.push_back(stats.kld);
    if (stats.kld > limit) {
      stats.early_stopped = true;
      break;
    }
  }
  return stats;
}

double value_mse(const Network& value, const TrainingSet& set) {
  nn::NoGradGuard no_grad;
  std::vector<std::size_t> rows;
  std::vector<double> psi_buf;
  std::vector<Alpha> hist_buf;
  double total = 0.0;
  for (std::size_t start = 0; start < set.size; start += kEvalChunk) {
    const std::size_t count = std::min(kEvalChunk, set.size - start);
    rows.resize(count);
    std::iota(rows.begin(), rows.end(), start);
    const nn::Tensor v = value.forward(set.input(rows, psi_buf, hist_buf));
    for (std::size_t i = 0; i < count; ++i) {
      const double e = set.returns[start + i] - v.data()[i];
      total += e * e;
    }
  }
  return total / static_cast<double>(set.size);
}

ValueUpdateStats update_value(const Network& value, const TrainingSet& set, const PpoConfig& cfg, nn::Adam& opt,
                              Rng& rng) {
  ValueUpdateStats stats;
  stats.initial_mse = value_mse(value, set);
  MiniBatcher batches(set.size, cfg.batch, rng);
  std::vector<double> psi_buf;
  std::vector<Alpha> hist_buf;
  for (std::size_t it = 0; it < cfg.iters_v; ++it) {
    const auto rows = batches.next();
    std::vector<double> target(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) target[i] = set.returns[rows[i]];
    const nn::Tensor v = nn::reshape(value.forward(set.input(rows, psi_buf, hist_buf)), {rows.size()});
    const nn::Tensor loss = nn::mean(nn::square(nn::sub(v, nn::Tensor::from({rows.size()}, std::move(target)))));
    if (!std::isfinite(loss.item())) throw std::runtime_error("update_value: non-finite loss");
    opt.zero_grad();
    loss.backward();
    opt.step();
    ++stats.steps;
    stats.batch_rows = rows.size();
  }
  stats.final_mse = value_mse(value, set);
  return stats;
}

void write_metrics_header(std::ostream& os) {
  os << "epoch,mean_reward,mean_current_estimate,policy_steps,kld_at_stop,value_mse,wall_time_s\n";
}

void write_metrics_row(std::ostream& os, const EpochMetrics& m) {
  os << m.epoch << ',' << format_number(m.mean_reward) << ',' << format_number(m.mean_current) << ','
     << m.policy_steps << ',' << format_number(m.kld_at_stop) << ',' << format_number(m.value_mse) << ','
     << format_number(m.wall_time_s) << '\n';
}

TrainResult train(const EnvSpec& env, const ArchConfig& arch, const PpoConfig& cfg, std::uint64_t seed,
                  const TrainOptions& options) {
  cfg.validate();
  env.params.validate();
  ArchConfig policy_cfg = arch;
  policy_cfg.n = env.n;
  policy_cfg.out_dim = 2;
  ArchConfig value_cfg = policy_cfg;
  value_cfg.out_dim = 1;
  check_arch(policy_cfg, env);

  Rng policy_init(seed, 1);
  Rng value_init(seed, 2);
  Rng shuffle(seed, 3);
  const Network policy(policy_cfg, policy_init);
  const Network value(value_cfg, value_init);
  nn::Adam opt_pi(policy.parameters(), {.lr = cfg.lr_pi});
  nn::Adam opt_v(value.parameters(), {.lr = cfg.lr_v});

  TrainResult result;
  double best_reward = -std::numeric_limits<double>::infinity();
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    const auto rollouts = collect(env, policy, value, cfg, derive_seed(seed, 1000 + epoch));
    const TrainingSet set = build_training_set(rollouts, cfg);
    if (set.mean_reward > best_reward) {
      best_reward = set.mean_reward;
      result.best_checkpoint = make_checkpoint(policy, &value, env.tau, seed, static_cast<std::int64_t>(epoch));
    }
    const PolicyUpdateStats ps = update_policy(policy, set, cfg, opt_pi, shuffle);
    const ValueUpdateStats vs = update_value(value, set, cfg, opt_v, shuffle);

    EpochMetrics m;
    m.epoch = epoch;
    m.mean_reward = set.mean_reward;
    m.mean_current = set.mean_reward / env.params.dt;
    m.policy_steps = ps.steps;
    m.kld_at_stop = ps.kld;
    m.value_mse = vs.final_mse;
    m.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.metrics.push_back(m);
    if (options.on_epoch) options.on_epoch(m);
  }
  result.final_checkpoint = make_checkpoint(policy, &value, env.tau, seed, static_cast<std::int64_t>(cfg.epochs));
  return result;
}

}  // namespace ratchet
