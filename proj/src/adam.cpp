#include "ratchet/adam.hpp"

#include <cmath>

namespace ratchet::nn {

Adam::Adam(std::vector<Tensor> params, AdamOptions options)
    : params_(std::move(params)), options_(options) {
  for (const Tensor& p : params_) {
    m_.emplace_back(p.numel(), 0.0);
    v_.emplace_back(p.numel(), 0.0);
  }
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(options_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(options_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto theta = params_[k].data();
    auto g = params_[k].grad();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m[i] = options_.beta1 * m[i] + (1.0 - options_.beta1) * g[i];
      v[i] = options_.beta2 * v[i] + (1.0 - options_.beta2) * g[i] * g[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      theta[i] -= options_.lr * m_hat / (std::sqrt(v_hat) + options_.eps);
    }
  }
}

void Adam::zero_grad() {
  for (Tensor& p : params_) p.zero_grad();
}

}  // namespace ratchet::nn
