#include "ratchet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <stdexcept>
#include <unordered_set>

#ifdef __GLIBC__
#include <malloc.h>
#endif

namespace ratchet::nn {
namespace {

#ifdef __GLIBC__
// Keep large activation buffers on the heap rather than in fresh mappings.
const bool kHeapTuned = [] {
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 512 << 20);
  return true;
}();
#endif

thread_local bool g_grad_enabled = true;

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
  throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_string(a) + " vs " +
                              shape_string(b));
}

bool needs_graph(std::initializer_list<const Tensor*> inputs) {
  if (!g_grad_enabled) return false;
  for (const Tensor* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

// Builds the output node; attaches parents and the backward rule only when
// some input requires grad.
Tensor make_result(Shape shape, std::vector<double> data, std::initializer_list<const Tensor*> inputs,
                   std::function<void(Node&)> backward_fn) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  if (needs_graph(inputs)) {
    node->requires_grad = true;
    node->is_leaf = false;
    for (const Tensor* t : inputs) node->parents.push_back(t->node());
    node->backward_fn = std::move(backward_fn);
  }
  return Tensor(std::move(node));
}

// Gradient buffer of parent `i`, or nullptr if it does not take gradients.
double* parent_grad(Node& self, std::size_t i) {
  Node& p = *self.parents[i];
  if (!p.requires_grad) return nullptr;
  p.ensure_grad();
  return p.grad.data();
}

const std::vector<double>& parent_data(const Node& self, std::size_t i) {
  return self.parents[i]->data;
}

struct AxisSplit {
  std::size_t outer = 1;
  std::size_t len = 1;
  std::size_t inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis, const char* op) {
  if (axis >= shape.size()) {
    throw std::invalid_argument(std::string(op) + ": axis " + std::to_string(axis) +
                                " out of range for shape " + shape_string(shape));
  }
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.len = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

template <typename Fwd, typename Bwd>
Tensor unary(const Tensor& a, Fwd fwd, Bwd dydx) {
  std::vector<double> out(a.numel());
  auto in = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(in[i]);
  return make_result(a.shape(), std::move(out), {&a}, [dydx](Node& self) {
    double* ga = parent_grad(self, 0);
    if (!ga) return;
    const auto& x = parent_data(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i] * dydx(x[i], self.data[i]);
  });
}

void require_2d(const Tensor& a, const char* op) {
  if (a.rank() != 2) {
    throw std::invalid_argument(std::string(op) + ": expected a 2-D tensor, got " + shape_string(a.shape()));
  }
}

}  // namespace

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return from(shape, std::vector<double>(shape_numel(shape), 0.0), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw std::invalid_argument("Tensor::from: " + std::to_string(values.size()) +
                                " values for shape " + shape_string(shape));
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(values);
  node->requires_grad = requires_grad;
  if (requires_grad) node->ensure_grad();
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({1}, {value}, requires_grad); }

std::span<const double> Tensor::grad() const {
  node_->ensure_grad();
  return node_->grad;
}

std::span<double> Tensor::mutable_grad() {
  node_->ensure_grad();
  return node_->grad;
}

double Tensor::item() const {
  if (numel() != 1) throw std::invalid_argument("item: tensor of shape " + shape_string(shape()));
  return node_->data[0];
}

void Tensor::zero_grad() { node_->grad.assign(node_->data.size(), 0.0); }

void Tensor::backward() const {
  if (numel() != 1) {
    throw std::invalid_argument("backward: loss must be scalar, got shape " + shape_string(shape()));
  }
  if (!node_->requires_grad) return;

  // Post-order DFS over the recorded graph.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].get();
      if (p->requires_grad && !p->is_leaf && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  for (Node* n : order) n->grad.assign(n->data.size(), 0.0);
  node_->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward_fn) (*it)->backward_fn(**it);
  }
}

Tensor Tensor::detach() const { return from(shape(), node_->data, false); }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

Tensor add(const Tensor& a, const Tensor& b) {
  const bool same = a.shape() == b.shape();
  const bool row = !same && b.rank() == 1 && a.rank() >= 1 && b.dim(0) == a.shape().back();
  if (!same && !row) shape_error("add", a.shape(), b.shape());
  std::vector<double> out(a.data().begin(), a.data().end());
  auto bd = b.data();
  const std::size_t nb = bd.size();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bd[same ? i : i % nb];
  return make_result(a.shape(), std::move(out), {&a, &b}, [same, nb](Node& self) {
    if (double* ga = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i];
    }
    if (double* gb = parent_grad(self, 1)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) gb[same ? i : i % nb] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error("sub", a.shape(), b.shape());
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  return make_result(a.shape(), std::move(out), {&a, &b}, [](Node& self) {
    if (double* ga = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i];
    }
    if (double* gb = parent_grad(self, 1)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) gb[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error("mul", a.shape(), b.shape());
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return make_result(a.shape(), std::move(out), {&a, &b}, [](Node& self) {
    const auto& x = parent_data(self, 0);
    const auto& y = parent_data(self, 1);
    if (double* ga = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i] * y[i];
    }
    if (double* gb = parent_grad(self, 1)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) gb[i] += self.grad[i] * x[i];
    }
  });
}

Tensor scale(const Tensor& a, double s) {
  return unary(a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Tensor add_scalar(const Tensor& a, double s) {
  return unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Tensor minimum(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error("minimum", a.shape(), b.shape());
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::min(a.data()[i], b.data()[i]);
  return make_result(a.shape(), std::move(out), {&a, &b}, [](Node& self) {
    const auto& x = parent_data(self, 0);
    const auto& y = parent_data(self, 1);
    double* ga = parent_grad(self, 0);
    double* gb = parent_grad(self, 1);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (x[i] <= y[i]) {
        if (ga) ga[i] += self.grad[i];
      } else if (gb) {
        gb[i] += self.grad[i];
      }
    }
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) shape_error("matmul", a.shape(), b.shape());
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n, 0.0);
  auto ad = a.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < m; ++i) {
    double* row = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ad[i * k + p];
      const double* brow = bd.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
    }
  }
  return make_result({m, n}, std::move(out), {&a, &b}, [m, k, n](Node& self) {
    const auto& x = parent_data(self, 0);
    const auto& y = parent_data(self, 1);
    const double* g = self.grad.data();
    if (double* ga = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * y[p * n + j];
          ga[i * k + p] += acc;
        }
      }
    }
    if (double* gb = parent_grad(self, 1)) {
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          const double xv = x[i * k + p];
          for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += xv * g[i * n + j];
        }
      }
    }
  });
}

namespace {

// out = x wt + b over tiles of 4 rows x 16 columns. Ragged edges are padded
// so that every element goes through the same instruction sequence: b[o]
// followed by the products in increasing k. A row's result therefore does
// not depend on its position or on the batch size.
typedef double Vec8 __attribute__((vector_size(64)));

inline Vec8 load8(const double* p) {
  Vec8 v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

inline void store8(double* p, Vec8 v) { std::memcpy(p, &v, sizeof v); }

constexpr std::size_t kTileRows = 4;
constexpr std::size_t kTileCols = 16;

// x: 4 rows of stride `in`; wt: in x cols (cols a multiple of 16).
void linear_tile(const double* x, std::size_t in, const double* wt, const double* b, std::size_t cols, double* out,
                 std::size_t out_stride) {
  const double* x0 = x;
  const double* x1 = x0 + in;
  const double* x2 = x1 + in;
  const double* x3 = x2 + in;
  for (std::size_t o = 0; o < cols; o += kTileCols) {
    const Vec8 blo = load8(b + o), bhi = load8(b + o + 8);
    Vec8 a0 = blo, a1 = bhi, a2 = blo, a3 = bhi, a4 = blo, a5 = bhi, a6 = blo, a7 = bhi;
    for (std::size_t k = 0; k < in; ++k) {
      const Vec8 wlo = load8(wt + k * cols + o);
      const Vec8 whi = load8(wt + k * cols + o + 8);
      a0 = a0 + x0[k] * wlo;
      a1 = a1 + x0[k] * whi;
      a2 = a2 + x1[k] * wlo;
      a3 = a3 + x1[k] * whi;
      a4 = a4 + x2[k] * wlo;
      a5 = a5 + x2[k] * whi;
      a6 = a6 + x3[k] * wlo;
      a7 = a7 + x3[k] * whi;
    }
    double* r = out + o;
    store8(r, a0);
    store8(r + 8, a1);
    store8(r + out_stride, a2);
    store8(r + out_stride + 8, a3);
    store8(r + 2 * out_stride, a4);
    store8(r + 2 * out_stride + 8, a5);
    store8(r + 3 * out_stride, a6);
    store8(r + 3 * out_stride + 8, a7);
  }
}

// w is out_dim x in (row-major), as stored in Linear layers.
void linear_forward(const double* x, const double* w, const double* b, double* out, std::size_t rows,
                    std::size_t in, std::size_t out_dim) {
  const std::size_t cols = (out_dim + kTileCols - 1) / kTileCols * kTileCols;
  std::vector<double> wt(in * cols, 0.0);
  for (std::size_t o = 0; o < out_dim; ++o) {
    for (std::size_t k = 0; k < in; ++k) wt[k * cols + o] = w[o * in + k];
  }
  std::vector<double> bp(cols, 0.0);
  std::copy(b, b + out_dim, bp.begin());
  const bool direct = cols == out_dim;
  std::vector<double> tile(direct ? 0 : kTileRows * cols);
  std::vector<double> xpad;
  for (std::size_t i = 0; i < rows; i += kTileRows) {
    const std::size_t n = std::min(kTileRows, rows - i);
    const double* xs = x + i * in;
    if (n < kTileRows) {
      xpad.assign(kTileRows * in, 0.0);
      std::copy(xs, xs + n * in, xpad.begin());
      xs = xpad.data();
    }
    if (direct && n == kTileRows) {
      linear_tile(xs, in, wt.data(), bp.data(), cols, out + i * out_dim, out_dim);
      continue;
    }
    if (tile.size() < kTileRows * cols) tile.resize(kTileRows * cols);
    linear_tile(xs, in, wt.data(), bp.data(), cols, tile.data(), cols);
    for (std::size_t r = 0; r < n; ++r) {
      std::copy_n(tile.data() + r * cols, out_dim, out + (i + r) * out_dim);
    }
  }
}

}  // namespace


Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (x.rank() != 2 || weight.rank() != 2 || x.dim(1) != weight.dim(1)) {
    shape_error("linear", x.shape(), weight.shape());
  }
  if (bias.rank() != 1 || bias.dim(0) != weight.dim(0)) shape_error("linear(bias)", weight.shape(), bias.shape());
  const std::size_t rows = x.dim(0), in = x.dim(1), out_dim = weight.dim(0);
  std::vector<double> out(rows * out_dim);
  linear_forward(x.data().data(), weight.data().data(), bias.data().data(), out.data(), rows, in, out_dim);
  return make_result({rows, out_dim}, std::move(out), {&x, &weight, &bias}, [rows, in, out_dim](Node& self) {
    const auto& xv = parent_data(self, 0);
    const auto& wv = parent_data(self, 1);
    const double* g = self.grad.data();
    if (double* gx = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < rows; ++i) {
        double* dst = gx + i * in;
        for (std::size_t o = 0; o < out_dim; ++o) {
          const double go = g[i * out_dim + o];
          const double* wrow = wv.data() + o * in;
          for (std::size_t k = 0; k < in; ++k) dst[k] += go * wrow[k];
        }
      }
    }
    if (double* gw = parent_grad(self, 1)) {
      for (std::size_t i = 0; i < rows; ++i) {
        const double* xrow = xv.data() + i * in;
        for (std::size_t o = 0; o < out_dim; ++o) {
          const double go = g[i * out_dim + o];
          double* dst = gw + o * in;
          for (std::size_t k = 0; k < in; ++k) dst[k] += go * xrow[k];
        }
      }
    }
    if (double* gb = parent_grad(self, 2)) {
      for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t o = 0; o < out_dim; ++o) gb[o] += g[i * out_dim + o];
      }
    }
  });
}

Tensor relu(const Tensor& a) {
  return unary(a, [](double x) { return x > 0.0 ? x : 0.0; },
               [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor tanh(const Tensor& a) {
  return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      a,
      [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor exp(const Tensor& a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor square(const Tensor& a) {
  return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor softmax(const Tensor& a, std::size_t axis) {
  const AxisSplit s = split_axis(a.shape(), axis, "softmax");
  auto x = a.data();
  std::vector<double> out(a.numel());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.len * s.inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t l = 0; l < s.len; ++l) mx = std::max(mx, x[base + l * s.inner]);
      double total = 0.0;
      for (std::size_t l = 0; l < s.len; ++l) {
        const double e = std::exp(x[base + l * s.inner] - mx);
        out[base + l * s.inner] = e;
        total += e;
      }
      for (std::size_t l = 0; l < s.len; ++l) out[base + l * s.inner] /= total;
    }
  }
  return make_result(a.shape(), std::move(out), {&a}, [s](Node& self) {
    double* ga = parent_grad(self, 0);
    if (!ga) return;
    const auto& y = self.data;
    const auto& g = self.grad;
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t in = 0; in < s.inner; ++in) {
        const std::size_t base = o * s.len * s.inner + in;
        double dot = 0.0;
        for (std::size_t l = 0; l < s.len; ++l) dot += g[base + l * s.inner] * y[base + l * s.inner];
        for (std::size_t l = 0; l < s.len; ++l) {
          const std::size_t idx = base + l * s.inner;
          ga[idx] += y[idx] * (g[idx] - dot);
        }
      }
    }
  });
}

Tensor log_softmax(const Tensor& a, std::size_t axis) {
  const AxisSplit s = split_axis(a.shape(), axis, "log_softmax");
  auto x = a.data();
  std::vector<double> out(a.numel());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.len * s.inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t l = 0; l < s.len; ++l) mx = std::max(mx, x[base + l * s.inner]);
      double total = 0.0;
      for (std::size_t l = 0; l < s.len; ++l) total += std::exp(x[base + l * s.inner] - mx);
      const double lse = mx + std::log(total);
      for (std::size_t l = 0; l < s.len; ++l) out[base + l * s.inner] = x[base + l * s.inner] - lse;
    }
  }
  return make_result(a.shape(), std::move(out), {&a}, [s](Node& self) {
    double* ga = parent_grad(self, 0);
    if (!ga) return;
    const auto& y = self.data;
    const auto& g = self.grad;
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t in = 0; in < s.inner; ++in) {
        const std::size_t base = o * s.len * s.inner + in;
        double gsum = 0.0;
        for (std::size_t l = 0; l < s.len; ++l) gsum += g[base + l * s.inner];
        for (std::size_t l = 0; l < s.len; ++l) {
          const std::size_t idx = base + l * s.inner;
          ga[idx] += g[idx] - std::exp(y[idx]) * gsum;
        }
      }
    }
  });
}

Tensor mean(const Tensor& a, std::size_t axis) {
  const AxisSplit s = split_axis(a.shape(), axis, "mean");
  Shape shape = a.shape();
  shape.erase(shape.begin() + static_cast<std::ptrdiff_t>(axis));
  if (shape.empty()) shape = {1};
  auto x = a.data();
  std::vector<double> out(s.outer * s.inner, 0.0);
  const double len = static_cast<double>(s.len);
  // Sum in index order, then divide once.
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t l = 0; l < s.len; ++l) {
      const double* src = x.data() + (o * s.len + l) * s.inner;
      double* dst = out.data() + o * s.inner;
      for (std::size_t in = 0; in < s.inner; ++in) dst[in] += src[in];
    }
  }
  for (double& v : out) v /= len;
  return make_result(std::move(shape), std::move(out), {&a}, [s, len](Node& self) {
    double* ga = parent_grad(self, 0);
    if (!ga) return;
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t l = 0; l < s.len; ++l) {
        double* dst = ga + (o * s.len + l) * s.inner;
        const double* g = self.grad.data() + o * s.inner;
        for (std::size_t in = 0; in < s.inner; ++in) dst[in] += g[in] / len;
      }
    }
  });
}

Tensor sum(const Tensor& a) {
  double total = 0.0;
  for (double v : a.data()) total += v;
  return make_result({1}, {total}, {&a}, [](Node& self) {
    double* ga = parent_grad(self, 0);
    if (!ga) return;
    const std::size_t n = self.parents[0]->data.size();
    for (std::size_t i = 0; i < n; ++i) ga[i] += self.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  const double n = static_cast<double>(a.numel());
  double total = 0.0;
  for (double v : a.data()) total += v;
  return make_result({1}, {total / n}, {&a}, [n](Node& self) {
    double* ga = parent_grad(self, 0);
    if (!ga) return;
    const std::size_t count = self.parents[0]->data.size();
    for (std::size_t i = 0; i < count; ++i) ga[i] += self.grad[0] / n;
  });
}

Tensor concat(const Tensor& a, const Tensor& b, std::size_t axis) {
  if (a.rank() != b.rank()) shape_error("concat", a.shape(), b.shape());
  for (std::size_t i = 0; i < a.rank(); ++i) {
    if (i != axis && a.dim(i) != b.dim(i)) shape_error("concat", a.shape(), b.shape());
  }
  const AxisSplit sa = split_axis(a.shape(), axis, "concat");
  const AxisSplit sb = split_axis(b.shape(), axis, "concat");
  Shape shape = a.shape();
  shape[axis] = sa.len + sb.len;
  const std::size_t ca = sa.len * sa.inner;
  const std::size_t cb = sb.len * sb.inner;
  std::vector<double> out(a.numel() + b.numel());
  for (std::size_t o = 0; o < sa.outer; ++o) {
    std::copy_n(a.data().data() + o * ca, ca, out.data() + o * (ca + cb));
    std::copy_n(b.data().data() + o * cb, cb, out.data() + o * (ca + cb) + ca);
  }
  const std::size_t outer = sa.outer;
  return make_result(std::move(shape), std::move(out), {&a, &b}, [outer, ca, cb](Node& self) {
    double* ga = parent_grad(self, 0);
    double* gb = parent_grad(self, 1);
    for (std::size_t o = 0; o < outer; ++o) {
      const double* g = self.grad.data() + o * (ca + cb);
      if (ga) {
        for (std::size_t i = 0; i < ca; ++i) ga[o * ca + i] += g[i];
      }
      if (gb) {
        for (std::size_t i = 0; i < cb; ++i) gb[o * cb + i] += g[ca + i];
      }
    }
  });
}

Tensor embedding_lookup(const Tensor& table, std::span<const std::size_t> indices) {
  require_2d(table, "embedding_lookup");
  const std::size_t vocab = table.dim(0), width = table.dim(1);
  std::vector<double> out(indices.size() * width);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= vocab) {
      throw std::invalid_argument("embedding_lookup: index " + std::to_string(indices[i]) +
                                  " out of range for table " + shape_string(table.shape()));
    }
    std::copy_n(table.data().data() + indices[i] * width, width, out.data() + i * width);
  }
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  return make_result({indices.size(), width}, std::move(out), {&table},
                     [idx = std::move(idx), width](Node& self) {
                       double* gt = parent_grad(self, 0);
                       if (!gt) return;
                       for (std::size_t i = 0; i < idx.size(); ++i) {
                         for (std::size_t j = 0; j < width; ++j) gt[idx[i] * width + j] += self.grad[i * width + j];
                       }
                     });
}

Tensor gather_cols(const Tensor& a, std::span<const std::size_t> cols) {
  require_2d(a, "gather_cols");
  const std::size_t rows = a.dim(0), width = a.dim(1);
  if (cols.size() != rows) {
    throw std::invalid_argument("gather_cols: " + std::to_string(cols.size()) + " indices for shape " +
                                shape_string(a.shape()));
  }
  std::vector<double> out(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    if (cols[i] >= width) throw std::invalid_argument("gather_cols: column index out of range");
    out[i] = a.data()[i * width + cols[i]];
  }
  std::vector<std::size_t> idx(cols.begin(), cols.end());
  return make_result({rows}, std::move(out), {&a}, [idx = std::move(idx), width](Node& self) {
    double* ga = parent_grad(self, 0);
    if (!ga) return;
    for (std::size_t i = 0; i < idx.size(); ++i) ga[i * width + idx[i]] += self.grad[i];
  });
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t count) {
  require_2d(a, "slice_cols");
  const std::size_t rows = a.dim(0), width = a.dim(1);
  if (begin + count > width) {
    throw std::invalid_argument("slice_cols: columns [" + std::to_string(begin) + ", " +
                                std::to_string(begin + count) + ") out of range for " + shape_string(a.shape()));
  }
  std::vector<double> out(rows * count);
  for (std::size_t i = 0; i < rows; ++i) {
    std::copy_n(a.data().data() + i * width + begin, count, out.data() + i * count);
  }
  return make_result({rows, count}, std::move(out), {&a}, [rows, width, begin, count](Node& self) {
    double* ga = parent_grad(self, 0);
    if (!ga) return;
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t j = 0; j < count; ++j) ga[i * width + begin + j] += self.grad[i * count + j];
    }
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) shape_error("reshape", a.shape(), shape);
  std::vector<double> out(a.data().begin(), a.data().end());
  return make_result(std::move(shape), std::move(out), {&a}, [](Node& self) {
    double* ga = parent_grad(self, 0);
    if (!ga) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i];
  });
}

}  // namespace ratchet::nn
