#pragma once

#include <cstdint>
#include <vector>

#include "ratchet/tensor.hpp"

namespace ratchet::nn {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction:
///   m <- b1 m + (1 - b1) g,  v <- b2 v + (1 - b2) g^2,
///   theta <- theta - lr * m_hat / (sqrt(v_hat) + eps).
class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamOptions options);

  /// One update from the parameters' accumulated gradients.
  void step();
  void zero_grad();

  std::int64_t steps() const { return t_; }
  const AdamOptions& options() const { return options_; }
  void set_lr(double lr) { options_.lr = lr; }

 private:
  std::vector<Tensor> params_;
  AdamOptions options_;
  std::int64_t t_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

}  // namespace ratchet::nn
