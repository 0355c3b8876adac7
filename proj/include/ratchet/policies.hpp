#pragma once

// Policies as seen by the evaluation harness. A PolicySource is immutable
// and shareable; it hands out Controllers, which hold per-trajectory state
// and decide actions for a group of environments advancing in lockstep.

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ratchet/baselines.hpp"
#include "ratchet/networks.hpp"
#include "ratchet/ratchet_core.hpp"

namespace ratchet {

class Controller {
 public:
  virtual ~Controller() = default;
  /// Called once with the initial environments, before the first act().
  virtual void reset(std::span<const DelayedEnv> envs) { (void)envs; }
  /// Writes one decision per environment into `out`.
  virtual void act(std::span<const DelayedEnv> envs, std::span<Alpha> out) = 0;
};

class PolicySource {
 public:
  virtual ~PolicySource() = default;
  virtual std::string name() const = 0;
  virtual std::unique_ptr<Controller> make_controller(const RatchetParams& params) const = 0;
  /// Throws std::invalid_argument if the policy cannot drive N particles
  /// under a delay tau.
  virtual void check_compatible(std::size_t n, double tau) const {
    (void)n;
    (void)tau;
  }
  /// p_on for each environment's current observation; 0 or 1 for
  /// deterministic rules.
  virtual std::vector<double> on_probability(std::span<const DelayedEnv> envs, const RatchetParams& params) const;
  /// Value estimates, if the policy carries a value network.
  virtual bool has_value() const { return false; }
  virtual std::vector<double> value(std::span<const DelayedEnv> envs) const;
};

class PeriodicSource : public PolicySource {
 public:
  explicit PeriodicSource(PeriodicSchedule schedule = {}) : schedule_(schedule) {}
  std::string name() const override { return "periodic"; }
  std::unique_ptr<Controller> make_controller(const RatchetParams& params) const override;

 private:
  PeriodicSchedule schedule_;
};

class GreedySource : public PolicySource {
 public:
  std::string name() const override { return "greedy"; }
  std::unique_ptr<Controller> make_controller(const RatchetParams& params) const override;
};

class ThresholdSource : public PolicySource {
 public:
  ThresholdSource(double u_on, double u_off);
  std::string name() const override { return "threshold"; }
  std::unique_ptr<Controller> make_controller(const RatchetParams& params) const override;

 private:
  double u_on_;
  double u_off_;
};

class MndSource : public PolicySource {
 public:
  explicit MndSource(double x0) : x0_(x0) {}
  std::string name() const override { return "mnd"; }
  std::unique_ptr<Controller> make_controller(const RatchetParams& params) const override;
  double x0() const { return x0_; }

 private:
  double x0_;
};

/// Always off (free diffusion) or always on.
class ConstantSource : public PolicySource {
 public:
  explicit ConstantSource(Alpha alpha) : alpha_(alpha) {}
  std::string name() const override { return alpha_ ? "on" : "off"; }
  std::unique_ptr<Controller> make_controller(const RatchetParams& params) const override;

 private:
  Alpha alpha_;
};

/// A trained policy network applied with the deterministic test rule.
class NetworkSource : public PolicySource {
 public:
  NetworkSource(std::shared_ptr<const Network> policy, std::shared_ptr<const Network> value,
                std::string label = "network");
  std::string name() const override { return label_; }
  std::unique_ptr<Controller> make_controller(const RatchetParams& params) const override;
  void check_compatible(std::size_t n, double tau) const override;
  std::vector<double> on_probability(std::span<const DelayedEnv> envs, const RatchetParams& params) const override;
  bool has_value() const override { return value_ != nullptr; }
  std::vector<double> value(std::span<const DelayedEnv> envs) const override;

  const Network& policy() const { return *policy_; }

 private:
  std::shared_ptr<const Network> policy_;
  std::shared_ptr<const Network> value_;
  std::string label_;
};

/// Feature and history buffers for a batch of environments.
struct ObservationBatch {
  std::vector<double> psi;
  std::vector<Alpha> history;
  std::size_t batch = 0;
  std::size_t n = 0;
  std::size_t d = 0;

  void fill(std::span<const DelayedEnv> envs);
  NetInput input() const { return {batch, n, psi, d, history}; }
};

}  // namespace ratchet
