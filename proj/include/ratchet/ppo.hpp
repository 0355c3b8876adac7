#pragma once

// Proximal policy optimization with a clipped surrogate, generalized
// advantage estimation, KL-based early stopping of the policy updates, and
// mean-squared-error regression of the value network.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include "ratchet/adam.hpp"
#include "ratchet/checkpoint.hpp"
#include "ratchet/networks.hpp"
#include "ratchet/ratchet_core.hpp"

namespace ratchet {

struct PpoConfig {
  std::size_t traj_len = 2000;  // T
  std::size_t epochs = 400;
  double gamma = 0.999;
  double lambda = 0.95;
  double clip_eps = 0.2;
  double d_targ = 0.01;
  std::size_t iters_pi = 625;
  std::size_t iters_v = 625;
  double lr_pi = 3e-4;
  double lr_v = 1e-3;
  std::size_t trajectories = 1024;  // M
  std::size_t batch = 4096;         // B

  /// Defaults with (M, B) chosen for N particles.
  static PpoConfig for_particles(std::size_t n);
  void validate() const;
};

struct BatchShape {
  std::size_t trajectories = 0;
  std::size_t batch = 0;
};

/// (M, B) by particle count: 1 -> (1024, 4096), 2 -> (512, 4096),
/// 4 -> (256, 4096), 8 -> (128, 4096), 16 -> (64, 2048), 32 -> (32, 1024),
/// 64 -> (16, 512), >= 128 -> (8, 256). Counts between rows use the row of
/// the largest listed N not exceeding n.
BatchShape batch_shape_for(std::size_t n);

struct EnvSpec {
  RatchetParams params;
  std::size_t n = 1;
  double tau = 0.0;
};

/// One trajectory: T actions and rewards, T + 1 observed states and values.
struct Rollout {
  std::size_t n = 0;
  std::size_t d = 0;
  std::size_t steps = 0;             // T
  std::vector<double> psi;           // (T+1) x n x 2
  std::vector<Alpha> history;        // (T+1) x d
  std::vector<Alpha> actions;        // T
  std::vector<double> old_log_prob;  // T
  std::vector<double> rewards;       // T
  std::vector<double> values;        // T+1
  double displacement = 0.0;         // mean particle displacement over the trajectory
};

/// Simulates cfg.trajectories trajectories of cfg.traj_len steps under
/// stochastic sampling of `policy`. Trajectory m draws from stream
/// (seed, m). Throws std::runtime_error on a non-finite network output.
std::vector<Rollout> collect(const EnvSpec& env, const Network& policy, const Network& value, const PpoConfig& cfg,
                             std::uint64_t seed);

/// Forced-action variant used for diagnostics: every step applies `alpha`.
std::vector<Rollout> collect_forced(const EnvSpec& env, Alpha alpha, const Network& value, const PpoConfig& cfg,
                                    std::uint64_t seed);

/// G_t = sum_{l=0}^{T-t} gamma^l r_{t+l} + gamma^{T-t+1} V(s_{T+1}), by
/// backward recursion. values has T + 1 entries.
std::vector<double> estimated_return(std::span<const double> rewards, std::span<const double> values, double gamma);

/// delta_t = r_t + gamma V(s_{t+1}) - V(s_t).
std::vector<double> td_residuals(std::span<const double> rewards, std::span<const double> values, double gamma);

/// A_t = sum_{l=0}^{T-t} (gamma lambda)^l delta_{t+l}, truncated at T.
std::vector<double> gae(std::span<const double> deltas, double gamma, double lambda);

/// g(eps, A) = (1 + eps) A for A >= 0, (1 - eps) A otherwise.
double clip_advantage(double eps, double advantage);

/// mean_i min(exp(log_ratio_i) A_i, g(eps, A_i)); the quantity to maximize.
nn::Tensor clipped_objective(const nn::Tensor& log_ratio, std::span<const double> advantages, double eps);

/// mean(old - new) over samples drawn from the old policy.
double kld_estimate(std::span<const double> old_log_prob, std::span<const double> new_log_prob);

/// Flattened training data of one epoch.
struct TrainingSet {
  std::size_t n = 0;
  std::size_t d = 0;
  std::size_t size = 0;
  std::vector<double> psi;      // size x n x 2
  std::vector<Alpha> history;   // size x d
  std::vector<Alpha> actions;
  std::vector<double> old_log_prob;
  std::vector<double> advantages;  // normalized to zero mean, unit variance
  std::vector<double> returns;
  double mean_reward = 0.0;

  NetInput input(std::span<const std::size_t> rows, std::vector<double>& psi_buf,
                 std::vector<Alpha>& hist_buf) const;
};

/// Computes returns, residuals and GAE per rollout and flattens everything.
TrainingSet build_training_set(std::span<const Rollout> rollouts, const PpoConfig& cfg);

/// Log-probabilities of the recorded actions under `policy`, over the whole
/// set.
std::vector<double> action_log_probs(const Network& policy, const TrainingSet& set);

struct PolicyUpdateStats {
  std::size_t steps = 0;
  double kld = 0.0;           // full-set estimate after the last step
  bool early_stopped = false;
  double first_objective = 0.0;
  std::vector<double> kld_trace;  // after each step
};

/// Up to iters_pi mini-batch ascent steps on the clipped objective; stops
/// as soon as the full-set KL estimate exceeds 1.5 d_targ.
PolicyUpdateStats update_policy(const Network& policy, const TrainingSet& set, const PpoConfig& cfg,
                                nn::Adam& opt, Rng& rng);

struct ValueUpdateStats {
  std::size_t steps = 0;
  double initial_mse = 0.0;
  double final_mse = 0.0;
  std::size_t batch_rows = 0;  // rows in each mini-batch
};

/// iters_v mini-batch steps on mean((G - V)^2).
ValueUpdateStats update_value(const Network& value, const TrainingSet& set, const PpoConfig& cfg, nn::Adam& opt,
                              Rng& rng);

/// Full-set mean((G - V)^2).
double value_mse(const Network& value, const TrainingSet& set);

struct EpochMetrics {
  std::size_t epoch = 0;
  double mean_reward = 0.0;
  double mean_current = 0.0;  // mean_reward / dt
  std::size_t policy_steps = 0;
  double kld_at_stop = 0.0;
  double value_mse = 0.0;
  double wall_time_s = 0.0;
};

/// CSV: epoch,mean_reward,mean_current_estimate,policy_steps,kld_at_stop,value_mse,wall_time_s
void write_metrics_header(std::ostream& os);
void write_metrics_row(std::ostream& os, const EpochMetrics& m);

struct TrainResult {
  Checkpoint final_checkpoint;
  Checkpoint best_checkpoint;  // epoch with the highest mean training reward
  std::vector<EpochMetrics> metrics;
};

struct TrainOptions {
  /// Called after each epoch (e.g. to stream the metrics CSV).
  std::function<void(const EpochMetrics&)> on_epoch;
};

/// Runs the full training loop from networks initialized with `seed`.
TrainResult train(const EnvSpec& env, const ArchConfig& arch, const PpoConfig& cfg, std::uint64_t seed,
                  const TrainOptions& options = {});

}  // namespace ratchet
