#pragma once

#include <cstddef>
#include <span>
#include <utility>

#include "ratchet/rng.hpp"
#include "ratchet/tensor.hpp"

namespace ratchet::nn {

/// Weight (fan_out x fan_in) and bias (fan_out), both i.i.d. uniform on
/// [-1/sqrt(fan_in), 1/sqrt(fan_in)].
std::pair<Tensor, Tensor> init_linear(std::size_t fan_in, std::size_t fan_out, Rng& rng);

struct Linear {
  Tensor weight;
  Tensor bias;

  Linear() = default;
  Linear(std::size_t in, std::size_t out, Rng& rng);

  Tensor operator()(const Tensor& x) const { return linear(x, weight, bias); }
};

struct Embedding {
  Tensor table;  // vocab x width, N(0, 1) entries

  Embedding() = default;
  Embedding(std::size_t vocab, std::size_t width, Rng& rng);

  Tensor operator()(std::span<const std::size_t> indices) const { return embedding_lookup(table, indices); }
};

/// Gated recurrent unit, gate order (r, z, n) in the stacked weights:
///   r  = sigmoid(W_r x + b_ir + U_r h + b_hr)
///   z  = sigmoid(W_z x + b_iz + U_z h + b_hz)
///   n  = tanh(W_n x + b_in + r * (U_n h + b_hn))
///   h' = (1 - z) * n + z * h
struct GruCell {
  std::size_t input = 0;
  std::size_t hidden = 0;
  Tensor w_ih;  // 3*hidden x input
  Tensor w_hh;  // 3*hidden x hidden
  Tensor b_ih;  // 3*hidden
  Tensor b_hh;  // 3*hidden

  GruCell() = default;
  /// Entries uniform on [-1/sqrt(hidden), 1/sqrt(hidden)].
  GruCell(std::size_t input_size, std::size_t hidden_size, Rng& rng);

  /// x: B x input, h: B x hidden -> B x hidden.
  Tensor operator()(const Tensor& x, const Tensor& h) const;
};

}  // namespace ratchet::nn
