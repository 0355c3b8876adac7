#include "ratchet/layers.hpp"

#include <cmath>
#include <stdexcept>
#include <tuple>

namespace ratchet::nn {
namespace {

Tensor uniform_tensor(Shape shape, double bound, Rng& rng) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = rng.uniform(-bound, bound);
  return Tensor::from(std::move(shape), std::move(v), true);
}

}  // namespace

std::pair<Tensor, Tensor> init_linear(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  if (fan_in == 0) throw std::invalid_argument("init_linear: fan_in must be >= 1");
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Tensor w = uniform_tensor({fan_out, fan_in}, bound, rng);
  Tensor b = uniform_tensor({fan_out}, bound, rng);
  return {w, b};
}

Linear::Linear(std::size_t in, std::size_t out, Rng& rng) {
  std::tie(weight, bias) = init_linear(in, out, rng);
}

Embedding::Embedding(std::size_t vocab, std::size_t width, Rng& rng) {
  std::vector<double> v(vocab * width);
  for (double& x : v) x = rng.normal();
  table = Tensor::from({vocab, width}, std::move(v), true);
}

GruCell::GruCell(std::size_t input_size, std::size_t hidden_size, Rng& rng)
    : input(input_size), hidden(hidden_size) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden_size));
  w_ih = uniform_tensor({3 * hidden, input}, bound, rng);
  w_hh = uniform_tensor({3 * hidden, hidden}, bound, rng);
  b_ih = uniform_tensor({3 * hidden}, bound, rng);
  b_hh = uniform_tensor({3 * hidden}, bound, rng);
}

Tensor GruCell::operator()(const Tensor& x, const Tensor& h) const {
  if (x.rank() != 2 || x.dim(1) != input) {
    throw std::invalid_argument("gru_cell: input shape " + shape_string(x.shape()) + " vs expected [Bx" +
                                std::to_string(input) + "]");
  }
  if (h.rank() != 2 || h.dim(1) != hidden || h.dim(0) != x.dim(0)) {
    throw std::invalid_argument("gru_cell: hidden shape " + shape_string(h.shape()) + " vs input " +
                                shape_string(x.shape()));
  }
  const Tensor gi = linear(x, w_ih, b_ih);
  const Tensor gh = linear(h, w_hh, b_hh);
  const Tensor r = sigmoid(add(slice_cols(gi, 0, hidden), slice_cols(gh, 0, hidden)));
  const Tensor z = sigmoid(add(slice_cols(gi, hidden, hidden), slice_cols(gh, hidden, hidden)));
  const Tensor n = tanh(add(slice_cols(gi, 2 * hidden, hidden), mul(r, slice_cols(gh, 2 * hidden, hidden))));
  // (1 - z) n + z h = n + z (h - n)
  return add(n, mul(z, sub(h, n)));
}

}  // namespace ratchet::nn
