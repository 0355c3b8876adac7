#pragma once

// Dense 64-bit tensors with dynamic reverse-mode differentiation.
//
// A Tensor is a shared handle to a node. Ops on tensors that require grad
// record a backward rule and their inputs; Tensor::backward() walks the graph
// in reverse topological order, accumulates into every leaf's grad, and then
// releases the recorded graph. Leaves (parameters) keep accumulating across
// calls until zero_grad().

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace ratchet::nn {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;
  bool is_leaf = true;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  }
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->data.size(); }

  std::span<double> data() { return node_->data; }
  std::span<const double> data() const { return node_->data; }
  /// Accumulated gradient; zeros if nothing has been accumulated yet.
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  double item() const;

  bool requires_grad() const { return node_->requires_grad; }
  void zero_grad();

  /// Reverse-mode sweep from this scalar. Throws std::invalid_argument when
  /// the tensor is not a single element.
  void backward() const;

  /// Copy of the values with no graph attached.
  Tensor detach() const;

  const std::shared_ptr<Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<Node> node_;
};

/// While alive, ops on the current thread do not record backward rules.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// Elementwise and linear-algebra ops. Shape mismatches throw
// std::invalid_argument naming both shapes.

/// a + b. b may equal a's shape, or be 1-D matching a's last dimension
/// (row broadcast).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
/// Elementwise min; the gradient goes to `a` where a <= b.
Tensor minimum(const Tensor& a, const Tensor& b);

/// (m x k) * (k x n).
Tensor matmul(const Tensor& a, const Tensor& b);
/// x W^T + b for x (B x in), W (out x in), b (out).
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

Tensor relu(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor square(const Tensor& a);

Tensor softmax(const Tensor& a, std::size_t axis);
Tensor log_softmax(const Tensor& a, std::size_t axis);

/// Mean over one axis (the axis is removed from the shape).
Tensor mean(const Tensor& a, std::size_t axis);
/// Mean of all elements, as a scalar.
Tensor mean(const Tensor& a);
Tensor sum(const Tensor& a);

Tensor concat(const Tensor& a, const Tensor& b, std::size_t axis);
/// Rows of a 2-D table selected by `indices`; result is indices.size() x cols.
Tensor embedding_lookup(const Tensor& table, std::span<const std::size_t> indices);
/// out[i] = a[i, cols[i]] for a 2-D tensor.
Tensor gather_cols(const Tensor& a, std::span<const std::size_t> cols);
/// Columns [begin, begin + count) of a 2-D tensor.
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t count);
Tensor reshape(const Tensor& a, Shape shape);

}  // namespace ratchet::nn
