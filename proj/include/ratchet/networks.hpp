#pragma once

// Policy and value network architectures: a two-hidden-layer MLP over the
// flattened features, a DeepSets network with mean pooling over particles,
// and a DeepSets trunk combined with a GRU over the pending on-off history.

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ratchet/layers.hpp"
#include "ratchet/ratchet_core.hpp"
#include "ratchet/rng.hpp"
#include "ratchet/tensor.hpp"

namespace ratchet {

enum class ArchKind { mlp, deepsets, rnn };

std::string_view to_string(ArchKind kind);
ArchKind parse_arch_kind(std::string_view name);

struct ArchConfig {
  ArchKind kind = ArchKind::deepsets;
  std::size_t n = 1;        // particle count; fixes the input width of the MLP only
  std::size_t hidden = 64;  // H
  std::size_t embed = 16;   // E; the GRU hidden size is 2E
  std::size_t out_dim = 2;  // 2 for a policy, 1 for a value network

  void validate() const;
};

/// A batch of network inputs. psi holds batch x n x 2 features; history holds
/// batch x d on-off symbols (oldest first), used only by the rnn architecture.
struct NetInput {
  std::size_t batch = 0;
  std::size_t n = 0;
  std::span<const double> psi;
  std::size_t d = 0;
  std::span<const Alpha> history;
};

struct NamedParam {
  std::string name;
  nn::Tensor tensor;
};

class Network {
 public:
  Network(const ArchConfig& config, Rng& rng);

  /// batch x out_dim logits (or values). Throws std::invalid_argument when
  /// the input does not fit the architecture.
  nn::Tensor forward(const NetInput& input) const;

  const ArchConfig& config() const { return config_; }
  std::vector<NamedParam> named_parameters() const;
  std::vector<nn::Tensor> parameters() const;

  /// Deep copy with fresh parameter tensors.
  Network clone() const;

 private:
  nn::Tensor forward_mlp(const NetInput& input) const;
  nn::Tensor deepsets_trunk(const NetInput& input) const;
  nn::Tensor forward_deepsets(const NetInput& input) const;
  nn::Tensor forward_rnn(const NetInput& input) const;

  ArchConfig config_;
  // mlp: l1, l2, head. deepsets: phi1, phi2, rho, head. rnn: phi1, phi2,
  // embedding, gru, rho, head.
  nn::Linear l1_, l2_;
  nn::Linear phi1_, phi2_;
  nn::Embedding embedding_;
  nn::GruCell gru_;
  nn::Linear rho_;
  nn::Linear head_;
};

/// Action probabilities from policy logits; index 0 is "on", index 1 "off".
struct PolicyOutput {
  double p_on = 0.5;
  double p_off = 0.5;
  double logit_on = 0.0;
  double logit_off = 0.0;

  static PolicyOutput from_logits(double logit_on, double logit_off);
};

/// One PolicyOutput per row of a batch x 2 logits tensor.
std::vector<PolicyOutput> policy_outputs(const nn::Tensor& logits);

/// Column of the logits for an action: on -> 0, off -> 1.
constexpr std::size_t action_column(Alpha alpha) { return alpha ? 0 : 1; }

struct SampledAction {
  Alpha alpha = 0;
  double log_prob = 0.0;
};

/// Bernoulli draw: alpha = 1 with probability p_on.
SampledAction sample_action(const PolicyOutput& out, Rng& rng);

/// 1 iff p_on > 0.5; an exact tie resolves to 0.
Alpha deterministic_action(const PolicyOutput& out);

}  // namespace ratchet
