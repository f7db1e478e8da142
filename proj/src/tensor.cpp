#include "gdwct/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "kernels.hpp"

namespace gdwct {

using detail::Node;

namespace {

std::atomic<std::uint64_t> g_sequence{0};
thread_local bool t_grad_enabled = true;

using NodePtr = std::shared_ptr<Node>;
using BackwardFn = std::function<void(Node&)>;

Tensor make_result(const char* op, Shape shape, std::vector<double> data,
                   std::vector<NodePtr> inputs, BackwardFn backward_fn) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->seq = ++g_sequence;
  node->op = op;
  const bool tracked =
      t_grad_enabled &&
      std::any_of(inputs.begin(), inputs.end(), [](const NodePtr& n) { return n->requires_grad; });
  if (tracked) {
    node->requires_grad = true;
    node->inputs = std::move(inputs);
    node->backward = std::move(backward_fn);
  }
  return Tensor::wrap(std::move(node));
}

Shape strides_of(const Shape& shape) {
  Shape strides(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) strides[i - 1] = strides[i] * shape[i];
  return strides;
}

void check_axes(const Shape& shape, const std::vector<std::size_t>& axes) {
  std::vector<bool> seen(shape.size(), false);
  for (auto axis : axes) {
    if (axis >= shape.size()) {
      throw ArgumentError("axis " + std::to_string(axis) + " out of range for shape " +
                          shape_str(shape));
    }
    if (seen[axis]) throw ArgumentError("repeated axis " + std::to_string(axis));
    seen[axis] = true;
  }
}

template <class Forward, class Derivative>
Tensor unary(const char* op, const Tensor& a, Forward f, Derivative df) {
  const auto& x = a.vec();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  return make_result(op, a.shape(), std::move(out), {a.node()}, [df](Node& self) {
    auto& in = *self.inputs[0];
    if (!in.requires_grad) return;
    auto& g = in.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * df(in.data[i], self.data[i]);
  });
}

// da/db return d out / d a and d out / d b given (a, b).
template <class Forward, class Da, class Db>
Tensor binary(const char* op, const Tensor& a, const Tensor& b, Forward f, Da da, Db db) {
  const bool same = a.shape() == b.shape();
  const bool a_scalar = a.numel() == 1 && !same;
  const bool b_scalar = b.numel() == 1 && !same;
  if (!same && !a_scalar && !b_scalar) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  const Shape& shape = a_scalar ? b.shape() : a.shape();
  const std::size_t n = numel_of(shape);
  const auto& x = a.vec();
  const auto& y = b.vec();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = f(x[a_scalar ? 0 : i], y[b_scalar ? 0 : i]);
  return make_result(op, shape, std::move(out), {a.node(), b.node()},
                     [a_scalar, b_scalar, da, db](Node& self) {
                       auto& na = *self.inputs[0];
                       auto& nb = *self.inputs[1];
                       const std::size_t n = self.data.size();
                       if (na.requires_grad) {
                         auto& g = na.grad_buffer();
                         for (std::size_t i = 0; i < n; ++i) {
                           const double xa = na.data[a_scalar ? 0 : i];
                           const double xb = nb.data[b_scalar ? 0 : i];
                           g[a_scalar ? 0 : i] += self.grad[i] * da(xa, xb);
                         }
                       }
                       if (nb.requires_grad) {
                         auto& g = nb.grad_buffer();
                         for (std::size_t i = 0; i < n; ++i) {
                           const double xa = na.data[a_scalar ? 0 : i];
                           const double xb = nb.data[b_scalar ? 0 : i];
                           g[b_scalar ? 0 : i] += self.grad[i] * db(xa, xb);
                         }
                       }
                     });
}

// Pure relabeling of the flat buffer: same data, new shape.
Tensor relabel(const char* op, const Tensor& a, Shape shape) {
  return make_result(op, std::move(shape), a.vec(), {a.node()}, [](Node& self) {
    auto& in = *self.inputs[0];
    if (!in.requires_grad) return;
    auto& g = in.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

// Output flat index -> input flat index. Applying it is a gather forward and
// a scatter-add backward.
Tensor gather(const char* op, const Tensor& a, Shape shape, std::vector<std::size_t> index) {
  const auto& x = a.vec();
  std::vector<double> out(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) out[i] = x[index[i]];
  return make_result(op, std::move(shape), std::move(out), {a.node()},
                     [index = std::move(index)](Node& self) {
                       auto& in = *self.inputs[0];
                       if (!in.requires_grad) return;
                       auto& g = in.grad_buffer();
                       for (std::size_t i = 0; i < index.size(); ++i) g[index[i]] += self.grad[i];
                     });
}

}  // namespace

std::size_t numel_of(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? ", " : "") << shape[i];
  os << ']';
  return os.str();
}

// ---- Tensor ---------------------------------------------------------------

Tensor::Tensor() : node_(std::make_shared<Node>()) { node_->shape = {1}; node_->data = {0.0}; }

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad)
    : node_(std::make_shared<Node>()) {
  if (shape.empty()) shape = {1};
  for (auto d : shape) {
    if (d == 0) throw ShapeError("zero-sized dimension in " + shape_str(shape));
  }
  if (numel_of(shape) != data.size()) {
    throw ShapeError("shape " + shape_str(shape) + " does not match " +
                     std::to_string(data.size()) + " values");
  }
  node_->shape = std::move(shape);
  node_->data = std::move(data);
  node_->requires_grad = requires_grad;
  node_->seq = ++g_sequence;
}

Tensor Tensor::zeros(const Shape& shape, bool requires_grad) {
  return full(shape, 0.0, requires_grad);
}

Tensor Tensor::full(const Shape& shape, double value, bool requires_grad) {
  return Tensor(shape, std::vector<double>(numel_of(shape), value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor({1}, {value}, requires_grad);
}

Tensor Tensor::eye(std::size_t n) {
  std::vector<double> v(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;
  return Tensor({n, n}, std::move(v));
}

Tensor Tensor::uniform(const Shape& shape, double lo, double hi, std::mt19937_64& rng,
                       bool requires_grad) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(numel_of(shape));
  for (auto& x : v) x = dist(rng);
  return Tensor(shape, std::move(v), requires_grad);
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= node_->shape.size()) {
    throw ArgumentError("axis " + std::to_string(axis) + " out of range for shape " +
                        shape_str(node_->shape));
  }
  return node_->shape[axis];
}

double Tensor::item() const {
  if (numel() != 1) throw ArgumentError("item() on tensor of shape " + shape_str(shape()));
  return node_->data[0];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
  const auto& shape = node_->shape;
  if (index.size() != shape.size()) throw ArgumentError("index rank mismatch");
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (auto i : index) {
    if (i >= shape[axis]) throw ArgumentError("index out of range");
    flat = flat * shape[axis] + i;
    ++axis;
  }
  return node_->data[flat];
}

std::span<const double> Tensor::grad() const {
  if (node_->grad.empty()) node_->grad.assign(node_->data.size(), 0.0);
  return node_->grad;
}

Tensor Tensor::detach() const { return Tensor(node_->shape, node_->data, false); }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }
bool grad_enabled() { return t_grad_enabled; }

// ---- elementwise ----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      "add", a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      "sub", a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      "mul", a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary(
      "div", a, b, [](double x, double y) { return x / y; },
      [](double, double y) { return 1.0 / y; }, [](double x, double y) { return -x / (y * y); });
}

Tensor scale(const Tensor& a, double factor) {
  return unary(
      "scale", a, [factor](double x) { return factor * x; },
      [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double offset) {
  return unary(
      "add_scalar", a, [offset](double x) { return x + offset; },
      [](double, double) { return 1.0; });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor relu(const Tensor& a) {
  return unary(
      "relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor leaky_relu(const Tensor& a) {
  return unary(
      "leaky_relu", a, [](double x) { return x > 0.0 ? x : kLeakySlope * x; },
      [](double x, double) { return x > 0.0 ? 1.0 : kLeakySlope; });
}

Tensor tanh(const Tensor& a) {
  return unary(
      "tanh", a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      "sigmoid", a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor abs(const Tensor& a) {
  return unary(
      "abs", a, [](double x) { return std::fabs(x); },
      [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Tensor square(const Tensor& a) {
  return unary(
      "square", a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

// Derivative at 0 is taken as 0 so an exactly-zero argument cannot inject NaN.
Tensor sqrt(const Tensor& a) {
  return unary(
      "sqrt", a, [](double x) { return std::sqrt(x); },
      [](double, double y) { return y > 0.0 ? 0.5 / y : 0.0; });
}

Tensor clamp_min(const Tensor& a, double lo) {
  return unary(
      "clamp_min", a, [lo](double x) { return x > lo ? x : lo; },
      [lo](double x, double) { return x > lo ? 1.0 : 0.0; });
}

Tensor elementwise(ElementwiseOp op, std::span<const Tensor> operands, double factor) {
  auto need = [&](std::size_t n) {
    if (operands.size() != n) {
      throw ArgumentError("elementwise op expects " + std::to_string(n) + " operand(s), got " +
                          std::to_string(operands.size()));
    }
  };
  switch (op) {
    case ElementwiseOp::kAdd: need(2); return add(operands[0], operands[1]);
    case ElementwiseOp::kSub: need(2); return sub(operands[0], operands[1]);
    case ElementwiseOp::kMul: need(2); return mul(operands[0], operands[1]);
    case ElementwiseOp::kDiv: need(2); return div(operands[0], operands[1]);
    case ElementwiseOp::kRelu: need(1); return relu(operands[0]);
    case ElementwiseOp::kLeakyRelu: need(1); return leaky_relu(operands[0]);
    case ElementwiseOp::kTanh: need(1); return tanh(operands[0]);
    case ElementwiseOp::kScale: need(1); return scale(operands[0], factor);
  }
  throw ArgumentError("unknown elementwise op");
}

// ---- reductions -----------------------------------------------------------

Tensor reduce(ReduceOp op, const Tensor& a, std::vector<std::size_t> axes, bool keepdim) {
  const Shape& in_shape = a.shape();
  check_axes(in_shape, axes);
  std::vector<bool> reduced(in_shape.size(), false);
  for (auto axis : axes) reduced[axis] = true;

  Shape kept_shape;  // keepdim layout
  std::size_t count = 1;
  for (std::size_t i = 0; i < in_shape.size(); ++i) {
    kept_shape.push_back(reduced[i] ? 1 : in_shape[i]);
    if (reduced[i]) count *= in_shape[i];
  }
  Shape out_shape;
  if (keepdim) {
    out_shape = kept_shape;
  } else {
    for (std::size_t i = 0; i < in_shape.size(); ++i)
      if (!reduced[i]) out_shape.push_back(in_shape[i]);
    if (out_shape.empty()) out_shape = {1};
  }

  // Map each input element to its output slot.
  const Shape out_strides = strides_of(kept_shape);
  const std::size_t n = a.numel();
  std::vector<std::size_t> map(n);
  std::vector<std::size_t> idx(in_shape.size(), 0);
  for (std::size_t flat = 0; flat < n; ++flat) {
    std::size_t o = 0;
    for (std::size_t d = 0; d < in_shape.size(); ++d)
      if (!reduced[d]) o += idx[d] * out_strides[d];
    map[flat] = o;
    for (std::size_t d = in_shape.size(); d-- > 0;) {
      if (++idx[d] < in_shape[d]) break;
      idx[d] = 0;
    }
  }

  const double factor = op == ReduceOp::kMean ? 1.0 / static_cast<double>(count) : 1.0;
  std::vector<double> out(numel_of(out_shape), 0.0);
  const auto& x = a.vec();
  for (std::size_t i = 0; i < n; ++i) out[map[i]] += x[i];
  if (factor != 1.0)
    for (auto& v : out) v *= factor;

  return make_result(op == ReduceOp::kMean ? "mean" : "sum", std::move(out_shape), std::move(out),
                     {a.node()}, [map = std::move(map), factor](Node& self) {
                       auto& in = *self.inputs[0];
                       if (!in.requires_grad) return;
                       auto& g = in.grad_buffer();
                       for (std::size_t i = 0; i < map.size(); ++i)
                         g[i] += factor * self.grad[map[i]];
                     });
}

Tensor sum(const Tensor& a, std::vector<std::size_t> axes, bool keepdim) {
  return reduce(ReduceOp::kSum, a, std::move(axes), keepdim);
}

Tensor mean(const Tensor& a, std::vector<std::size_t> axes, bool keepdim) {
  return reduce(ReduceOp::kMean, a, std::move(axes), keepdim);
}

Tensor sum_all(const Tensor& a) {
  std::vector<std::size_t> axes(a.ndim());
  std::iota(axes.begin(), axes.end(), 0);
  return sum(a, axes);
}

Tensor mean_all(const Tensor& a) {
  std::vector<std::size_t> axes(a.ndim());
  std::iota(axes.begin(), axes.end(), 0);
  return mean(a, axes);
}

// ---- layout ---------------------------------------------------------------

Tensor reshape(const Tensor& a, const Shape& shape) {
  if (numel_of(shape) != a.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  return relabel("reshape", a, shape);
}

Tensor group_split(const Tensor& a, std::size_t groups) {
  const std::size_t channels = a.dim(0);
  if (groups == 0 || channels % groups != 0) {
    throw GroupDivisibilityError("channel count " + std::to_string(channels) +
                                 " is not divisible by " + std::to_string(groups) + " groups");
  }
  Shape shape{groups, channels / groups};
  shape.insert(shape.end(), a.shape().begin() + 1, a.shape().end());
  return relabel("group_split", a, std::move(shape));
}

Tensor group_merge(const Tensor& a) {
  if (a.ndim() < 2) throw ShapeError("group_merge needs rank >= 2, got " + shape_str(a.shape()));
  Shape shape{a.dim(0) * a.dim(1)};
  shape.insert(shape.end(), a.shape().begin() + 2, a.shape().end());
  return relabel("group_merge", a, std::move(shape));
}

Tensor flatten_spatial(const Tensor& a) {
  const Shape& s = a.shape();
  if (s.size() == 3) return relabel("flatten_spatial", a, {s[0], s[1] * s[2]});
  if (s.size() == 4) return relabel("flatten_spatial", a, {s[0], s[1], s[2] * s[3]});
  throw ShapeError("flatten_spatial expects [C,H,W] or [B,C,H,W], got " + shape_str(s));
}

Tensor permute(const Tensor& a, const std::vector<std::size_t>& order) {
  const Shape& in_shape = a.shape();
  if (order.size() != in_shape.size()) throw ArgumentError("permute: rank mismatch");
  check_axes(in_shape, order);
  const Shape in_strides = strides_of(in_shape);
  Shape out_shape(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) out_shape[i] = in_shape[order[i]];
  const std::size_t n = a.numel();
  std::vector<std::size_t> index(n);
  std::vector<std::size_t> idx(order.size(), 0);
  for (std::size_t flat = 0; flat < n; ++flat) {
    std::size_t src = 0;
    for (std::size_t d = 0; d < order.size(); ++d) src += idx[d] * in_strides[order[d]];
    index[flat] = src;
    for (std::size_t d = order.size(); d-- > 0;) {
      if (++idx[d] < out_shape[d]) break;
      idx[d] = 0;
    }
  }
  return gather("permute", a, std::move(out_shape), std::move(index));
}

Tensor transpose(const Tensor& a) {
  if (a.ndim() < 2) throw ShapeError("transpose needs rank >= 2, got " + shape_str(a.shape()));
  std::vector<std::size_t> order(a.ndim());
  std::iota(order.begin(), order.end(), 0);
  std::swap(order[order.size() - 1], order[order.size() - 2]);
  return permute(a, order);
}

Tensor expand(const Tensor& a, const Shape& shape) {
  const Shape& in_shape = a.shape();
  if (in_shape.size() != shape.size()) {
    throw ShapeError("expand: rank mismatch " + shape_str(in_shape) + " vs " + shape_str(shape));
  }
  for (std::size_t d = 0; d < shape.size(); ++d) {
    if (in_shape[d] != shape[d] && in_shape[d] != 1) {
      throw ShapeError("expand: cannot expand " + shape_str(in_shape) + " to " + shape_str(shape));
    }
  }
  const Shape in_strides = strides_of(in_shape);
  const std::size_t n = numel_of(shape);
  std::vector<std::size_t> index(n);
  std::vector<std::size_t> idx(shape.size(), 0);
  for (std::size_t flat = 0; flat < n; ++flat) {
    std::size_t src = 0;
    for (std::size_t d = 0; d < shape.size(); ++d)
      if (in_shape[d] != 1) src += idx[d] * in_strides[d];
    index[flat] = src;
    for (std::size_t d = shape.size(); d-- > 0;) {
      if (++idx[d] < shape[d]) break;
      idx[d] = 0;
    }
  }
  return gather("expand", a, shape, std::move(index));
}

Tensor select(const Tensor& a, std::size_t index) {
  const std::size_t outer = a.dim(0);
  if (index >= outer) {
    throw ArgumentError("select: index " + std::to_string(index) + " out of range for " +
                        shape_str(a.shape()));
  }
  Shape shape(a.shape().begin() + 1, a.shape().end());
  if (shape.empty()) shape = {1};
  const std::size_t inner = a.numel() / outer;
  const std::size_t offset = index * inner;
  std::vector<double> out(a.vec().begin() + static_cast<std::ptrdiff_t>(offset),
                          a.vec().begin() + static_cast<std::ptrdiff_t>(offset + inner));
  return make_result("select", std::move(shape), std::move(out), {a.node()},
                     [offset](Node& self) {
                       auto& in = *self.inputs[0];
                       if (!in.requires_grad) return;
                       auto& g = in.grad_buffer();
                       for (std::size_t i = 0; i < self.grad.size(); ++i)
                         g[offset + i] += self.grad[i];
                     });
}

namespace {

Tensor join(const char* op, std::span<const Tensor> parts, Shape shape) {
  std::vector<double> out;
  out.reserve(numel_of(shape));
  std::vector<NodePtr> inputs;
  for (const auto& p : parts) {
    out.insert(out.end(), p.vec().begin(), p.vec().end());
    inputs.push_back(p.node());
  }
  return make_result(op, std::move(shape), std::move(out), std::move(inputs), [](Node& self) {
    std::size_t offset = 0;
    for (auto& in : self.inputs) {
      const std::size_t n = in->data.size();
      if (in->requires_grad) {
        auto& g = in->grad_buffer();
        for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[offset + i];
      }
      offset += n;
    }
  });
}

}  // namespace

Tensor stack(std::span<const Tensor> parts) {
  if (parts.empty()) throw ArgumentError("stack of zero tensors");
  for (const auto& p : parts) {
    if (p.shape() != parts[0].shape()) {
      throw ShapeError("stack: shape mismatch " + shape_str(parts[0].shape()) + " vs " +
                       shape_str(p.shape()));
    }
  }
  Shape shape{parts.size()};
  shape.insert(shape.end(), parts[0].shape().begin(), parts[0].shape().end());
  return join("stack", parts, std::move(shape));
}

Tensor concat(std::span<const Tensor> parts) {
  if (parts.empty()) throw ArgumentError("concat of zero tensors");
  Shape shape = parts[0].shape();
  shape[0] = 0;
  for (const auto& p : parts) {
    if (p.ndim() != shape.size() ||
        !std::equal(p.shape().begin() + 1, p.shape().end(), shape.begin() + 1)) {
      throw ShapeError("concat: shape mismatch " + shape_str(parts[0].shape()) + " vs " +
                       shape_str(p.shape()));
    }
    shape[0] += p.dim(0);
  }
  return join("concat", parts, std::move(shape));
}

Tensor block_diag(const Tensor& blocks) {
  if (blocks.ndim() != 3 || blocks.dim(1) != blocks.dim(2)) {
    throw ShapeError("block_diag expects [G, d, d], got " + shape_str(blocks.shape()));
  }
  const std::size_t groups = blocks.dim(0);
  const std::size_t d = blocks.dim(1);
  const std::size_t n = groups * d;
  std::vector<double> out(n * n, 0.0);
  const auto& x = blocks.vec();
  for (std::size_t g = 0; g < groups; ++g)
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j)
        out[(g * d + i) * n + g * d + j] = x[(g * d + i) * d + j];
  return make_result("block_diag", {n, n}, std::move(out), {blocks.node()},
                     [groups, d, n](Node& self) {
                       auto& in = *self.inputs[0];
                       if (!in.requires_grad) return;
                       auto& gr = in.grad_buffer();
                       for (std::size_t g = 0; g < groups; ++g)
                         for (std::size_t i = 0; i < d; ++i)
                           for (std::size_t j = 0; j < d; ++j)
                             gr[(g * d + i) * d + j] += self.grad[(g * d + i) * n + g * d + j];
                     });
}

// ---- linear algebra -------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n, 0.0);
  kernels::gemm_nn(m, n, k, a.vec().data(), b.vec().data(), out.data());
  return make_result("matmul", {m, n}, std::move(out), {a.node(), b.node()},
                     [m, k, n](Node& self) {
                       auto& na = *self.inputs[0];
                       auto& nb = *self.inputs[1];
                       if (na.requires_grad)  // dA = G B^T
                         kernels::gemm_nt(m, k, n, self.grad.data(), nb.data.data(),
                                          na.grad_buffer().data());
                       if (nb.requires_grad)  // dB = A^T G
                         kernels::gemm_tn(k, n, m, na.data.data(), self.grad.data(),
                                          nb.grad_buffer().data());
                     });
}

Tensor bmm(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 3 || b.ndim() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(1)) {
    throw ShapeError("bmm: incompatible shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  }
  const std::size_t batch = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(2);
  std::vector<double> out(batch * m * n, 0.0);
  for (std::size_t i = 0; i < batch; ++i)
    kernels::gemm_nn(m, n, k, a.vec().data() + i * m * k, b.vec().data() + i * k * n,
                     out.data() + i * m * n);
  return make_result("bmm", {batch, m, n}, std::move(out), {a.node(), b.node()},
                     [batch, m, k, n](Node& self) {
                       auto& na = *self.inputs[0];
                       auto& nb = *self.inputs[1];
                       for (std::size_t i = 0; i < batch; ++i) {
                         const double* g = self.grad.data() + i * m * n;
                         if (na.requires_grad)
                           kernels::gemm_nt(m, k, n, g, nb.data.data() + i * k * n,
                                            na.grad_buffer().data() + i * m * k);
                         if (nb.requires_grad)
                           kernels::gemm_tn(k, n, m, na.data.data() + i * m * k, g,
                                            nb.grad_buffer().data() + i * k * n);
                       }
                     });
}

Tensor conv2d(const Tensor& input, const Tensor& kernel, std::size_t stride, std::size_t pad) {
  if (input.ndim() != 4 || kernel.ndim() != 4 || input.dim(1) != kernel.dim(1) ||
      kernel.dim(2) != kernel.dim(3)) {
    throw ShapeError("conv2d: incompatible input " + shape_str(input.shape()) + " and kernel " +
                     shape_str(kernel.shape()));
  }
  if (stride == 0) throw ArgumentError("conv2d: stride must be positive");
  const std::size_t batch = input.dim(0), channels = input.dim(1), height = input.dim(2),
                    width = input.dim(3);
  const std::size_t out_channels = kernel.dim(0), k = kernel.dim(2);
  if (k > height + 2 * pad || k > width + 2 * pad) {
    throw ShapeError("conv2d: kernel " + shape_str(kernel.shape()) +
                     " larger than padded input " + shape_str(input.shape()));
  }
  const kernels::ConvGeometry geo{channels, height, width, k, stride, pad,
                                  (height + 2 * pad - k) / stride + 1,
                                  (width + 2 * pad - k) / stride + 1};
  const std::size_t patch = channels * k * k;
  const std::size_t positions = geo.out_h * geo.out_w;
  const std::size_t in_size = channels * height * width;
  const std::size_t out_size = out_channels * positions;

  std::vector<double> out(batch * out_size, 0.0);
  std::vector<double> cols(patch * positions);
  for (std::size_t b = 0; b < batch; ++b) {
    kernels::im2col(geo, input.vec().data() + b * in_size, cols.data());
    kernels::gemm_nn(out_channels, positions, patch, kernel.vec().data(), cols.data(),
                     out.data() + b * out_size);
  }
  return make_result(
      "conv2d", {batch, out_channels, geo.out_h, geo.out_w}, std::move(out),
      {input.node(), kernel.node()},
      [geo, batch, out_channels, patch, positions, in_size, out_size](Node& self) {
        auto& in = *self.inputs[0];
        auto& w = *self.inputs[1];
        std::vector<double> cols(patch * positions);
        for (std::size_t b = 0; b < batch; ++b) {
          const double* g = self.grad.data() + b * out_size;
          if (w.requires_grad) {
            kernels::im2col(geo, in.data.data() + b * in_size, cols.data());
            kernels::gemm_nt(out_channels, patch, positions, g, cols.data(),
                             w.grad_buffer().data());
          }
          if (in.requires_grad) {
            std::fill(cols.begin(), cols.end(), 0.0);
            kernels::gemm_tn(patch, positions, out_channels, w.data.data(), g, cols.data());
            kernels::col2im_add(geo, cols.data(), in.grad_buffer().data() + b * in_size);
          }
        }
      });
}

Tensor avg_pool2x(const Tensor& input) {
  if (input.ndim() != 4 || input.dim(2) % 2 != 0 || input.dim(3) % 2 != 0) {
    throw ShapeError("avg_pool2x expects [B,C,H,W] with even H, W, got " +
                     shape_str(input.shape()));
  }
  const std::size_t planes = input.dim(0) * input.dim(1);
  const std::size_t h = input.dim(2), w = input.dim(3), oh = h / 2, ow = w / 2;
  const auto& x = input.vec();
  std::vector<double> out(planes * oh * ow);
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t i = 0; i < oh; ++i)
      for (std::size_t j = 0; j < ow; ++j) {
        const double* src = x.data() + p * h * w + 2 * i * w + 2 * j;
        out[(p * oh + i) * ow + j] = 0.25 * (src[0] + src[1] + src[w] + src[w + 1]);
      }
  return make_result("avg_pool2x", {input.dim(0), input.dim(1), oh, ow}, std::move(out),
                     {input.node()}, [planes, h, w, oh, ow](Node& self) {
                       auto& in = *self.inputs[0];
                       if (!in.requires_grad) return;
                       auto& g = in.grad_buffer();
                       for (std::size_t p = 0; p < planes; ++p)
                         for (std::size_t i = 0; i < oh; ++i)
                           for (std::size_t j = 0; j < ow; ++j) {
                             const double v = 0.25 * self.grad[(p * oh + i) * ow + j];
                             double* dst = g.data() + p * h * w + 2 * i * w + 2 * j;
                             dst[0] += v;
                             dst[1] += v;
                             dst[w] += v;
                             dst[w + 1] += v;
                           }
                     });
}

Tensor upsample_nearest2x(const Tensor& input) {
  if (input.ndim() != 4) {
    throw ShapeError("upsample_nearest2x expects [B,C,H,W], got " + shape_str(input.shape()));
  }
  const std::size_t planes = input.dim(0) * input.dim(1);
  const std::size_t h = input.dim(2), w = input.dim(3), oh = 2 * h, ow = 2 * w;
  std::vector<std::size_t> index(planes * oh * ow);
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t i = 0; i < oh; ++i)
      for (std::size_t j = 0; j < ow; ++j)
        index[(p * oh + i) * ow + j] = p * h * w + (i / 2) * w + j / 2;
  return gather("upsample_nearest2x", input, {input.dim(0), input.dim(1), oh, ow},
                std::move(index));
}

Tensor group_norm(const Tensor& input, std::size_t groups, double eps) {
  if (input.ndim() != 4) {
    throw ShapeError("group_norm expects [B,C,H,W], got " + shape_str(input.shape()));
  }
  const std::size_t batch = input.dim(0), channels = input.dim(1);
  if (groups == 0 || channels % groups != 0) {
    throw GroupDivisibilityError("group_norm: " + std::to_string(channels) +
                                 " channels not divisible by " + std::to_string(groups));
  }
  const std::size_t span = (channels / groups) * input.dim(2) * input.dim(3);
  const std::size_t slots = batch * groups;
  const auto& x = input.vec();
  std::vector<double> out(x.size());
  std::vector<double> inv_std(slots);
  for (std::size_t s = 0; s < slots; ++s) {
    const double* src = x.data() + s * span;
    double mu = 0.0;
    for (std::size_t i = 0; i < span; ++i) mu += src[i];
    mu /= static_cast<double>(span);
    double var = 0.0;
    for (std::size_t i = 0; i < span; ++i) var += (src[i] - mu) * (src[i] - mu);
    var /= static_cast<double>(span);
    const double r = 1.0 / std::sqrt(var + eps);
    inv_std[s] = r;
    for (std::size_t i = 0; i < span; ++i) out[s * span + i] = (src[i] - mu) * r;
  }
  return make_result("group_norm", input.shape(), std::move(out), {input.node()},
                     [slots, span, inv_std = std::move(inv_std)](Node& self) {
                       auto& in = *self.inputs[0];
                       if (!in.requires_grad) return;
                       auto& g = in.grad_buffer();
                       const double n = static_cast<double>(span);
                       for (std::size_t s = 0; s < slots; ++s) {
                         const double* dy = self.grad.data() + s * span;
                         const double* xhat = self.data.data() + s * span;
                         double mean_dy = 0.0, mean_dy_xhat = 0.0;
                         for (std::size_t i = 0; i < span; ++i) {
                           mean_dy += dy[i];
                           mean_dy_xhat += dy[i] * xhat[i];
                         }
                         mean_dy /= n;
                         mean_dy_xhat /= n;
                         for (std::size_t i = 0; i < span; ++i)
                           g[s * span + i] +=
                               inv_std[s] * (dy[i] - mean_dy - xhat[i] * mean_dy_xhat);
                       }
                     });
}

// ---- backward -------------------------------------------------------------

void backward(const Tensor& root) {
  if (root.numel() != 1) {
    throw ArgumentError("backward root must be a scalar, got shape " + shape_str(root.shape()));
  }
  if (!root.requires_grad()) return;

  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<Node*> stack{root.node().get()};
  seen.insert(root.node().get());
  while (!stack.empty()) {
    Node* n = stack.back();
    stack.pop_back();
    order.push_back(n);
    for (auto& in : n->inputs) {
      if (in->requires_grad && seen.insert(in.get()).second) stack.push_back(in.get());
    }
  }
  std::sort(order.begin(), order.end(), [](const Node* a, const Node* b) { return a->seq > b->seq; });

  root.node()->grad_buffer()[0] += 1.0;
  for (Node* n : order) {
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
}

}  // namespace gdwct
