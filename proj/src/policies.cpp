#include "ratchet/policies.hpp"

#include <algorithm>
#include <stdexcept>

#include "ratchet/tensor.hpp"

namespace ratchet {
namespace {

class PeriodicController : public Controller {
 public:
  PeriodicController(PeriodicSchedule s, double dt) : s_(s), dt_(dt) {}
  void act(std::span<const DelayedEnv> envs, std::span<Alpha> out) override {
    for (std::size_t i = 0; i < envs.size(); ++i) {
      out[i] = periodic_policy_steps(envs[i].state().steps, dt_, s_.t_on, s_.t_off);
    }
  }

 private:
  PeriodicSchedule s_;
  double dt_;
};

class GreedyController : public Controller {
 public:
  explicit GreedyController(const RatchetParams& p) : params_(p) {}
  void act(std::span<const DelayedEnv> envs, std::span<Alpha> out) override {
    for (std::size_t i = 0; i < envs.size(); ++i) out[i] = greedy_policy(envs[i].state(), params_);
  }

 private:
  RatchetParams params_;
};

class ThresholdController : public Controller {
 public:
  ThresholdController(const RatchetParams& p, double u_on, double u_off) : params_(p), u_on_(u_on), u_off_(u_off) {}
  void reset(std::span<const DelayedEnv> envs) override {
    states_.clear();
    for (const auto& env : envs) {
      states_.push_back(ThresholdState::start(u_on_, u_off_, mean_force(env.state(), params_)));
    }
  }
  void act(std::span<const DelayedEnv> envs, std::span<Alpha> out) override {
    if (states_.size() != envs.size()) reset(envs);
    for (std::size_t i = 0; i < envs.size(); ++i) {
      auto [alpha, next] = threshold_policy(states_[i], mean_force(envs[i].state(), params_));
      states_[i] = next;
      out[i] = alpha;
    }
  }

 private:
  RatchetParams params_;
  double u_on_;
  double u_off_;
  std::vector<ThresholdState> states_;
};

class MndController : public Controller {
 public:
  MndController(const RatchetParams& p, double x0) : params_(p), mp_(MndParams::for_potential(p, x0)) {}
  void act(std::span<const DelayedEnv> envs, std::span<Alpha> out) override {
    for (std::size_t i = 0; i < envs.size(); ++i) out[i] = mnd_policy(envs[i].state(), mp_, params_);
  }

 private:
  RatchetParams params_;
  MndParams mp_;
};

class ConstantController : public Controller {
 public:
  explicit ConstantController(Alpha a) : alpha_(a) {}
  void act(std::span<const DelayedEnv>, std::span<Alpha> out) override { std::fill(out.begin(), out.end(), alpha_); }

 private:
  Alpha alpha_;
};

class NetworkController : public Controller {
 public:
  explicit NetworkController(std::shared_ptr<const Network> net) : net_(std::move(net)) {}
  void act(std::span<const DelayedEnv> envs, std::span<Alpha> out) override {
    obs_.fill(envs);
    nn::NoGradGuard no_grad;
    const auto probs = policy_outputs(net_->forward(obs_.input()));
    for (std::size_t i = 0; i < envs.size(); ++i) out[i] = deterministic_action(probs[i]);
  }

 private:
  std::shared_ptr<const Network> net_;
  ObservationBatch obs_;
};

}  // namespace

void ObservationBatch::fill(std::span<const DelayedEnv> envs) {
  batch = envs.size();
  if (batch == 0) throw std::invalid_argument("ObservationBatch: no environments");
  n = envs.front().state().size();
  d = envs.front().delay();
  psi.resize(batch * n * 2);
  history.resize(batch * d);
  for (std::size_t b = 0; b < batch; ++b) {
    const DelayedEnv& env = envs[b];
    if (env.state().size() != n || env.delay() != d) {
      throw std::invalid_argument("ObservationBatch: environments differ in N or delay");
    }
    featurize_into(env.state().x, env.params(), std::span<double>(psi).subspan(b * n * 2, n * 2));
    std::copy(env.history().begin(), env.history().end(), history.begin() + static_cast<std::ptrdiff_t>(b * d));
  }
}

std::vector<double> PolicySource::on_probability(std::span<const DelayedEnv> envs, const RatchetParams& params) const {
  auto controller = make_controller(params);
  controller->reset(envs);
  std::vector<Alpha> actions(envs.size());
  controller->act(envs, actions);
  return {actions.begin(), actions.end()};
}

std::vector<double> PolicySource::value(std::span<const DelayedEnv>) const {
  throw std::logic_error("policy '" + name() + "' has no value network");
}

std::unique_ptr<Controller> PeriodicSource::make_controller(const RatchetParams& params) const {
  return std::make_unique<PeriodicController>(schedule_, params.dt);
}

std::unique_ptr<Controller> GreedySource::make_controller(const RatchetParams& params) const {
  return std::make_unique<GreedyController>(params);
}

ThresholdSource::ThresholdSource(double u_on, double u_off) : u_on_(u_on), u_off_(u_off) {
  if (u_on < 0.0 || u_off > 0.0) throw std::invalid_argument("threshold: need u_on >= 0 and u_off <= 0");
}

std::unique_ptr<Controller> ThresholdSource::make_controller(const RatchetParams& params) const {
  return std::make_unique<ThresholdController>(params, u_on_, u_off_);
}

std::unique_ptr<Controller> MndSource::make_controller(const RatchetParams& params) const {
  return std::make_unique<MndController>(params, x0_);
}

std::unique_ptr<Controller> ConstantSource::make_controller(const RatchetParams&) const {
  return std::make_unique<ConstantController>(alpha_);
}

NetworkSource::NetworkSource(std::shared_ptr<const Network> policy, std::shared_ptr<const Network> value,
                             std::string label)
    : policy_(std::move(policy)), value_(std::move(value)), label_(std::move(label)) {
  if (!policy_) throw std::invalid_argument("NetworkSource: null policy network");
  if (policy_->config().out_dim != 2) throw std::invalid_argument("NetworkSource: policy network must have out_dim 2");
}

std::unique_ptr<Controller> NetworkSource::make_controller(const RatchetParams&) const {
  return std::make_unique<NetworkController>(policy_);
}

void NetworkSource::check_compatible(std::size_t n, double tau) const {
  const ArchConfig& cfg = policy_->config();
  if (cfg.kind == ArchKind::mlp && cfg.n != n) {
    throw std::invalid_argument("checkpoint: mlp network was built for N=" + std::to_string(cfg.n) +
                                ", cannot drive N=" + std::to_string(n));
  }
  if (cfg.kind == ArchKind::rnn && !(tau > 0.0)) {
    throw std::invalid_argument("checkpoint: rnn network needs a positive feedback delay");
  }
}

std::vector<double> NetworkSource::on_probability(std::span<const DelayedEnv> envs, const RatchetParams&) const {
  ObservationBatch obs;
  obs.fill(envs);
  nn::NoGradGuard no_grad;
  std::vector<double> out;
  for (const auto& p : policy_outputs(policy_->forward(obs.input()))) out.push_back(p.p_on);
  return out;
}

std::vector<double> NetworkSource::value(std::span<const DelayedEnv> envs) const {
  if (!value_) return PolicySource::value(envs);
  ObservationBatch obs;
  obs.fill(envs);
  nn::NoGradGuard no_grad;
  const nn::Tensor v = value_->forward(obs.input());
  return {v.data().begin(), v.data().end()};
}

}  // namespace ratchet
