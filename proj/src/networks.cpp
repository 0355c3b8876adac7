#include "ratchet/networks.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ratchet {

using nn::Tensor;

std::string_view to_string(ArchKind kind) {
  switch (kind) {
    case ArchKind::mlp: return "mlp";
    case ArchKind::deepsets: return "deepsets";
    case ArchKind::rnn: return "rnn";
  }
  return "?";
}

ArchKind parse_arch_kind(std::string_view name) {
  if (name == "mlp") return ArchKind::mlp;
  if (name == "deepsets") return ArchKind::deepsets;
  if (name == "rnn") return ArchKind::rnn;
  throw std::invalid_argument("unknown architecture '" + std::string(name) + "'");
}

void ArchConfig::validate() const {
  if (n == 0) throw std::invalid_argument("ArchConfig: n must be >= 1");
  if (hidden == 0 || embed == 0) throw std::invalid_argument("ArchConfig: H and E must be >= 1");
  if (out_dim != 1 && out_dim != 2) throw std::invalid_argument("ArchConfig: out_dim must be 1 or 2");
}

Network::Network(const ArchConfig& config, Rng& rng) : config_(config) {
  config_.validate();
  const std::size_t h = config_.hidden;
  switch (config_.kind) {
    case ArchKind::mlp:
      l1_ = nn::Linear(2 * config_.n, h, rng);
      l2_ = nn::Linear(h, h, rng);
      head_ = nn::Linear(h, config_.out_dim, rng);
      break;
    case ArchKind::deepsets:
      phi1_ = nn::Linear(2, h, rng);
      phi2_ = nn::Linear(h, h, rng);
      rho_ = nn::Linear(h, h, rng);
      head_ = nn::Linear(h, config_.out_dim, rng);
      break;
    case ArchKind::rnn:
      phi1_ = nn::Linear(2, h, rng);
      phi2_ = nn::Linear(h, h, rng);
      embedding_ = nn::Embedding(2, config_.embed, rng);
      gru_ = nn::GruCell(config_.embed, 2 * config_.embed, rng);
      rho_ = nn::Linear(h + 2 * config_.embed, h, rng);
      head_ = nn::Linear(h, config_.out_dim, rng);
      break;
  }
}

std::vector<NamedParam> Network::named_parameters() const {
  auto lin = [](std::vector<NamedParam>& out, const std::string& name, const nn::Linear& l) {
    out.push_back({name + ".weight", l.weight});
    out.push_back({name + ".bias", l.bias});
  };
  std::vector<NamedParam> out;
  switch (config_.kind) {
    case ArchKind::mlp:
      lin(out, "l1", l1_);
      lin(out, "l2", l2_);
      break;
    case ArchKind::deepsets:
      lin(out, "phi1", phi1_);
      lin(out, "phi2", phi2_);
      lin(out, "rho", rho_);
      break;
    case ArchKind::rnn:
      lin(out, "phi1", phi1_);
      lin(out, "phi2", phi2_);
      out.push_back({"embedding.table", embedding_.table});
      out.push_back({"gru.w_ih", gru_.w_ih});
      out.push_back({"gru.w_hh", gru_.w_hh});
      out.push_back({"gru.b_ih", gru_.b_ih});
      out.push_back({"gru.b_hh", gru_.b_hh});
      lin(out, "rho", rho_);
      break;
  }
  lin(out, "head", head_);
  return out;
}

std::vector<Tensor> Network::parameters() const {
  std::vector<Tensor> out;
  for (auto& p : named_parameters()) out.push_back(p.tensor);
  return out;
}

Network Network::clone() const {
  Rng scratch(0);
  Network copy(config_, scratch);
  auto src = named_parameters();
  auto dst = copy.named_parameters();
  for (std::size_t i = 0; i < src.size(); ++i) {
    std::copy(src[i].tensor.data().begin(), src[i].tensor.data().end(), dst[i].tensor.data().begin());
  }
  return copy;
}

Tensor Network::forward(const NetInput& input) const {
  if (input.batch == 0) throw std::invalid_argument("forward: empty batch");
  if (input.n == 0) throw std::invalid_argument("forward: N must be >= 1");
  if (input.psi.size() != input.batch * input.n * 2) {
    throw std::invalid_argument("forward: feature buffer holds " + std::to_string(input.psi.size()) +
                                " values, expected " + std::to_string(input.batch * input.n * 2));
  }
  switch (config_.kind) {
    case ArchKind::mlp: return forward_mlp(input);
    case ArchKind::deepsets: return forward_deepsets(input);
    case ArchKind::rnn: return forward_rnn(input);
  }
  throw std::logic_error("forward: bad architecture");
}

Tensor Network::forward_mlp(const NetInput& input) const {
  if (input.n != config_.n) {
    throw std::invalid_argument("mlp_forward: input has N=" + std::to_string(input.n) + " but network expects N=" +
                                std::to_string(config_.n));
  }
  const Tensor x = Tensor::from({input.batch, 2 * input.n}, {input.psi.begin(), input.psi.end()});
  return head_(nn::relu(l2_(nn::relu(l1_(x)))));
}

Tensor Network::deepsets_trunk(const NetInput& input) const {
  const Tensor x = Tensor::from({input.batch * input.n, 2}, {input.psi.begin(), input.psi.end()});
  const Tensor per_particle = phi2_(nn::relu(phi1_(x)));
  return nn::mean(nn::reshape(per_particle, {input.batch, input.n, config_.hidden}), 1);
}

Tensor Network::forward_deepsets(const NetInput& input) const {
  return head_(nn::relu(rho_(deepsets_trunk(input))));
}

Tensor Network::forward_rnn(const NetInput& input) const {
  if (input.d == 0) throw std::invalid_argument("rnn_forward: empty on-off history");
  if (input.history.size() != input.batch * input.d) {
    throw std::invalid_argument("rnn_forward: history buffer holds " + std::to_string(input.history.size()) +
                                " symbols, expected " + std::to_string(input.batch * input.d));
  }
  const Tensor trunk = deepsets_trunk(input);
  Tensor h = Tensor::zeros({input.batch, gru_.hidden});
  std::vector<std::size_t> tokens(input.batch);
  for (std::size_t j = 0; j < input.d; ++j) {
    for (std::size_t b = 0; b < input.batch; ++b) {
      const Alpha a = input.history[b * input.d + j];
      if (a > 1) throw std::invalid_argument("rnn_forward: history symbols must be 0 or 1");
      tokens[b] = a;
    }
    h = gru_(embedding_(tokens), h);
  }
  return head_(nn::relu(rho_(nn::concat(trunk, h, 1))));
}

PolicyOutput PolicyOutput::from_logits(double logit_on, double logit_off) {
  const double m = std::max(logit_on, logit_off);
  const double e_on = std::exp(logit_on - m);
  const double e_off = std::exp(logit_off - m);
  const double total = e_on + e_off;
  return {e_on / total, e_off / total, logit_on, logit_off};
}

std::vector<PolicyOutput> policy_outputs(const Tensor& logits) {
  if (logits.rank() != 2 || logits.dim(1) != 2) {
    throw std::invalid_argument("policy_outputs: expected Bx2 logits, got " + nn::shape_string(logits.shape()));
  }
  std::vector<PolicyOutput> out(logits.dim(0));
  auto d = logits.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = PolicyOutput::from_logits(d[2 * i], d[2 * i + 1]);
  return out;
}

SampledAction sample_action(const PolicyOutput& out, Rng& rng) {
  const Alpha alpha = rng.uniform() < out.p_on ? 1 : 0;
  return {alpha, std::log(alpha ? out.p_on : out.p_off)};
}

Alpha deterministic_action(const PolicyOutput& out) { return out.p_on > 0.5 ? 1 : 0; }

}  // namespace ratchet
