#pragma once

// Dense float64 tensors with tape-style reverse-mode differentiation.
//
// Every op that touches a tensor with requires_grad() records its inputs and a
// backward closure on the output node. Nodes carry a monotonically increasing
// sequence number, so replaying nodes in decreasing sequence order is a valid
// reverse topological order of the graph (the "tape"). The graph is owned by
// the tensors themselves and vanishes with the last handle to the root.
//
// Broadcasting is limited to a one-element tensor combined with any tensor.
// Everything else (per-channel bias, mean subtraction...) goes through an
// explicit expand().

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "gdwct/errors.hpp"

namespace gdwct {

using Shape = std::vector<std::size_t>;

std::size_t numel_of(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until the first accumulation
  bool requires_grad = false;
  std::uint64_t seq = 0;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this->grad and accumulates into inputs' grads.
  std::function<void(Node&)> backward;

  std::vector<double>& grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

class Tensor {
 public:
  Tensor();
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(const Shape& shape, bool requires_grad = false);
  static Tensor full(const Shape& shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor eye(std::size_t n);
  static Tensor uniform(const Shape& shape, double lo, double hi, std::mt19937_64& rng,
                        bool requires_grad = false);

  const Shape& shape() const { return node_->shape; }
  std::size_t dim(std::size_t axis) const;
  std::size_t ndim() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->data.size(); }

  std::span<const double> data() const { return node_->data; }
  // Mutable access is for leaves (parameters, optimizer updates, test
  // perturbation). Mutating an interior node does not re-run its graph.
  std::span<double> mutable_data() { return node_->data; }
  const std::vector<double>& vec() const { return node_->data; }

  double item() const;
  double at(std::initializer_list<std::size_t> index) const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  bool has_grad() const { return !node_->grad.empty(); }
  // Zero-filled view when no gradient has been accumulated yet.
  std::span<const double> grad() const;
  std::span<double> mutable_grad() { return node_->grad_buffer(); }
  void zero_grad() { node_->grad.clear(); }

  const char* op() const { return node_->op; }
  bool is_leaf() const { return node_->inputs.empty(); }

  // Same values, no history.
  Tensor detach() const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }
  static Tensor wrap(std::shared_ptr<detail::Node> node) {
    Tensor t;
    t.node_ = std::move(node);
    return t;
  }

 private:
  std::shared_ptr<detail::Node> node_;
};

// Disables graph recording on the current thread while alive.
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

// ---- elementwise --------------------------------------------------------

enum class ElementwiseOp { kAdd, kSub, kMul, kDiv, kRelu, kLeakyRelu, kTanh, kScale };

inline constexpr double kLeakySlope = 0.2;

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double offset);
Tensor neg(const Tensor& a);

Tensor relu(const Tensor& a);
Tensor leaky_relu(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor abs(const Tensor& a);
Tensor square(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor clamp_min(const Tensor& a, double lo);

// Tag dispatch over the named ops above. Binary tags take two operands,
// kScale takes one operand plus `factor`, the rest take one operand.
Tensor elementwise(ElementwiseOp op, std::span<const Tensor> operands, double factor = 1.0);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }
inline Tensor operator*(const Tensor& a, double s) { return scale(a, s); }

// ---- reductions ---------------------------------------------------------

enum class ReduceOp { kSum, kMean };

Tensor reduce(ReduceOp op, const Tensor& a, std::vector<std::size_t> axes, bool keepdim = false);
Tensor sum(const Tensor& a, std::vector<std::size_t> axes, bool keepdim = false);
Tensor mean(const Tensor& a, std::vector<std::size_t> axes, bool keepdim = false);
Tensor sum_all(const Tensor& a);
Tensor mean_all(const Tensor& a);

// ---- layout -------------------------------------------------------------

Tensor reshape(const Tensor& a, const Shape& shape);
// [C, ...] -> [G, C/G, ...]
Tensor group_split(const Tensor& a, std::size_t groups);
// [G, d, ...] -> [G*d, ...]
Tensor group_merge(const Tensor& a);
// [C, H, W] -> [C, H*W] and [B, C, H, W] -> [B, C, H*W]
Tensor flatten_spatial(const Tensor& a);
Tensor permute(const Tensor& a, const std::vector<std::size_t>& order);
// Swaps the last two axes.
Tensor transpose(const Tensor& a);
// Repeats size-1 axes of `a` up to `shape` (same rank). Gradient sums back.
Tensor expand(const Tensor& a, const Shape& shape);
// Slice `index` of axis 0, dropping that axis.
Tensor select(const Tensor& a, std::size_t index);
// Stacks equally shaped tensors along a new leading axis.
Tensor stack(std::span<const Tensor> parts);
// Concatenates along axis 0.
Tensor concat(std::span<const Tensor> parts);
// [G, d, d] -> [G*d, G*d], zeros off the diagonal blocks.
Tensor block_diag(const Tensor& blocks);

// ---- linear algebra and image ops ---------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
// [N, M, K] x [N, K, P] -> [N, M, P]
Tensor bmm(const Tensor& a, const Tensor& b);
// input [B, C, H, W], kernel [O, C, k, k]; zero padding, cross-correlation.
Tensor conv2d(const Tensor& input, const Tensor& kernel, std::size_t stride, std::size_t pad);
Tensor avg_pool2x(const Tensor& input);
Tensor upsample_nearest2x(const Tensor& input);
// Normalizes each (sample, group) over its channels and spatial extent.
// groups == C gives instance normalization. No affine parameters.
Tensor group_norm(const Tensor& input, std::size_t groups, double eps = 1e-5);

// Accumulates d root / d t into every requires_grad tensor reachable from
// `root`. `root` must hold exactly one element.
void backward(const Tensor& root);

}  // namespace gdwct
