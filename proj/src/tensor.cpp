// Copyright 2026 The pcnr Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "pcnr/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace pcnr {

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  bool leaf = true;
  std::uint64_t id = 0;
  std::vector<std::shared_ptr<Node>> inputs;
  BackwardFn backward;
  const char* op = "leaf";
  std::string name;
};

}  // namespace detail

namespace {

using detail::Node;

std::atomic<std::uint64_t> g_next_id{1};
thread_local bool t_grad_enabled = true;

std::shared_ptr<Node> new_node(const Shape& shape, std::vector<double> values) {
  if (values.size() != shape_numel(shape)) {
    throw ShapeError("tensor of shape " + shape_str(shape) + " needs " +
                     std::to_string(shape_numel(shape)) + " values, got " +
                     std::to_string(values.size()));
  }
  auto node = std::make_shared<Node>();
  node->shape = shape;
  node->value = std::move(values);
  node->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
  return node;
}

std::span<double> ensure_grad(Node& node) {
  if (node.grad.size() != node.value.size()) node.grad.assign(node.value.size(), 0.0);
  return node.grad;
}

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;

// Evaluates into Eigen-owned aligned storage, then adds into dst.
template <typename Expr>
void accumulate(std::span<double> dst, const Expr& expr) {
  const RowMajor r = expr;
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += r.data()[i];
}

// Index maps from output positions to input positions under broadcasting.
struct Broadcast {
  enum class Kind { kSame, kScalar, kSuffix, kGeneral };
  Kind kind = Kind::kSame;
  std::size_t period = 1;            // kSuffix
  std::vector<std::size_t> indices;  // kGeneral

  std::size_t operator()(std::size_t i) const {
    switch (kind) {
      case Kind::kSame: return i;
      case Kind::kScalar: return 0;
      case Kind::kSuffix: return i % period;
      case Kind::kGeneral: return indices[i];
    }
    return i;
  }
};

Broadcast make_broadcast(const Shape& in, const Shape& out) {
  Broadcast b;
  const std::size_t n_in = shape_numel(in);
  if (in == out) return b;
  if (n_in == 1) {
    b.kind = Broadcast::Kind::kScalar;
    return b;
  }
  // `in` equals a suffix of `out`: a repeating block.
  if (in.size() <= out.size() && std::equal(in.begin(), in.end(), out.end() - in.size())) {
    b.kind = Broadcast::Kind::kSuffix;
    b.period = n_in;
    return b;
  }
  b.kind = Broadcast::Kind::kGeneral;
  const std::size_t rank = out.size();
  std::vector<std::size_t> stride(rank, 0);
  std::size_t s = 1;
  for (std::size_t k = 0; k < in.size(); ++k) {
    const std::size_t axis_in = in.size() - 1 - k;
    const std::size_t axis_out = rank - 1 - k;
    stride[axis_out] = in[axis_in] == 1 ? 0 : s;
    s *= in[axis_in];
  }
  const std::size_t n_out = shape_numel(out);
  b.indices.resize(n_out);
  std::vector<std::size_t> counter(rank, 0);
  std::size_t offset = 0;
  for (std::size_t i = 0; i < n_out; ++i) {
    b.indices[i] = offset;
    for (std::size_t axis = rank; axis-- > 0;) {
      ++counter[axis];
      offset += stride[axis];
      if (counter[axis] < out[axis]) break;
      offset -= stride[axis] * counter[axis];
      counter[axis] = 0;
    }
  }
  return b;
}

template <typename F, typename DA, typename DB>
Tensor binary_op(const Tensor& a, const Tensor& b, const char* name, F f, DA da, DB db) {
  const Shape out_shape = broadcast_shapes(a.shape(), b.shape());
  const std::size_t n = shape_numel(out_shape);
  auto map_a = std::make_shared<Broadcast>(make_broadcast(a.shape(), out_shape));
  auto map_b = std::make_shared<Broadcast>(make_broadcast(b.shape(), out_shape));
  const auto av = a.values();
  const auto bv = b.values();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = f(av[(*map_a)(i)], bv[(*map_b)(i)]);
  return Tensor::make_op(
      out_shape, std::move(out), {a, b},
      [map_a, map_b, da, db, n](std::span<const double> g, const GradInputs& in) {
        const auto av = in.value(0);
        const auto bv = in.value(1);
        if (in.wants(0)) {
          auto ga = in.grad(0);
          for (std::size_t i = 0; i < n; ++i) {
            const std::size_t ia = (*map_a)(i);
            ga[ia] += g[i] * da(av[ia], bv[(*map_b)(i)]);
          }
        }
        if (in.wants(1)) {
          auto gb = in.grad(1);
          for (std::size_t i = 0; i < n; ++i) {
            const std::size_t ib = (*map_b)(i);
            gb[ib] += g[i] * db(av[(*map_a)(i)], bv[ib]);
          }
        }
      },
      name);
}

// Unary op whose derivative is expressed through the input x and output y.
template <typename F, typename D>
Tensor unary_op(const Tensor& x, const char* name, F f, D d) {
  const auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  auto y = std::make_shared<std::vector<double>>();
  const bool record = grad_enabled() && x.requires_grad();
  if (record) *y = out;
  return Tensor::make_op(
      x.shape(), std::move(out), {x},
      [y, d](std::span<const double> g, const GradInputs& in) {
        const auto xv = in.value(0);
        auto gx = in.grad(0);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * d(xv[i], (*y)[i]);
      },
      name);
}

// Splits a shape around `axis` into outer * extent * inner.
struct AxisSplit {
  std::size_t outer = 1;
  std::size_t extent = 1;
  std::size_t inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis) {
  if (axis >= shape.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(shape));
  }
  AxisSplit s;
  for (std::size_t k = 0; k < axis; ++k) s.outer *= shape[k];
  s.extent = shape[axis];
  for (std::size_t k = axis + 1; k < shape.size(); ++k) s.inner *= shape[k];
  return s;
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? ", " : "") << shape[i];
  os << ']';
  return os.str();
}

Shape broadcast_shapes(const Shape& a, const Shape& b) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank);
  for (std::size_t k = 0; k < rank; ++k) {
    const std::size_t ea = k < a.size() ? a[a.size() - 1 - k] : 1;
    const std::size_t eb = k < b.size() ? b[b.size() - 1 - k] : 1;
    if (ea != eb && ea != 1 && eb != 1) {
      throw ShapeError("cannot broadcast " + shape_str(a) + " with " + shape_str(b) +
                       ": extents " + std::to_string(ea) + " and " + std::to_string(eb) +
                       " differ at trailing axis " + std::to_string(k));
    }
    out[rank - 1 - k] = std::max(ea, eb);
  }
  return out;
}

bool GradInputs::wants(std::size_t i) const { return inputs_[i]->requires_grad; }

std::span<double> GradInputs::grad(std::size_t i) const { return ensure_grad(*inputs_[i]); }

std::span<const double> GradInputs::value(std::size_t i) const { return inputs_[i]->value; }

Tensor::Tensor() : node_(new_node({}, {0.0})) {}

Tensor Tensor::zeros(const Shape& shape, bool requires_grad) {
  return full(shape, 0.0, requires_grad);
}

Tensor Tensor::full(const Shape& shape, double value, bool requires_grad) {
  return from_values(shape, std::vector<double>(shape_numel(shape), value), requires_grad);
}

Tensor Tensor::from_values(const Shape& shape, std::vector<double> values, bool requires_grad) {
  Tensor t(new_node(shape, std::move(values)));
  t.node_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_values({}, {value}, requires_grad);
}

const Shape& Tensor::shape() const { return node_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= rank()) throw ShapeError("axis " + std::to_string(axis) + " out of range for " + shape_str(shape()));
  return node_->shape[axis];
}

std::size_t Tensor::numel() const { return node_->value.size(); }

std::span<const double> Tensor::values() const { return node_->value; }

std::span<double> Tensor::mutable_values() { return node_->value; }

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return node_->value[0];
}

bool Tensor::requires_grad() const { return node_->requires_grad; }

std::span<const double> Tensor::grad() const { return node_->grad; }

std::span<double> Tensor::mutable_grad() { return ensure_grad(*node_); }

void Tensor::zero_grad() { std::fill(node_->grad.begin(), node_->grad.end(), 0.0); }

std::uint64_t Tensor::node_id() const { return node_->id; }

const std::string& Tensor::name() const { return node_->name; }

Tensor& Tensor::set_name(std::string name) {
  node_->name = std::move(name);
  return *this;
}

Tensor Tensor::detach() const { return from_values(shape(), node_->value, false); }

Tensor Tensor::make_op(const Shape& shape, std::vector<double> values, std::vector<Tensor> inputs,
                       BackwardFn backward, const char* op_name) {
  auto node = new_node(shape, std::move(values));
  node->op = op_name;
  node->leaf = false;
  if (grad_enabled()) {
    const bool any = std::any_of(inputs.begin(), inputs.end(),
                                 [](const Tensor& t) { return t.requires_grad(); });
    if (any) {
      node->requires_grad = true;
      node->inputs.reserve(inputs.size());
      for (auto& t : inputs) node->inputs.push_back(t.node_);
      node->backward = std::move(backward);
    }
  }
  return Tensor(std::move(node));
}

void Tensor::backward() const {
  if (numel() != 1) {
    throw ShapeError("backward() needs a scalar root, got shape " + shape_str(shape()));
  }
  if (!node_->requires_grad) return;

  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<Node*> stack{node_.get()};
  seen.insert(node_.get());
  while (!stack.empty()) {
    Node* n = stack.back();
    stack.pop_back();
    order.push_back(n);
    for (auto& in : n->inputs) {
      if (in->requires_grad && seen.insert(in.get()).second) stack.push_back(in.get());
    }
  }
  std::sort(order.begin(), order.end(), [](const Node* a, const Node* b) { return a->id > b->id; });

  for (Node* n : order) {
    if (!n->leaf) n->grad.assign(n->value.size(), 0.0);
  }
  ensure_grad(*node_)[0] += 1.0;
  for (Node* n : order) {
    if (n->backward) n->backward(n->grad, GradInputs(n->inputs));
  }
}

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }
bool grad_enabled() { return t_grad_enabled; }

// ---------------------------------------------------------------- arithmetic

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "div", [](double x, double y) { return x / y; },
      [](double, double y) { return 1.0 / y; }, [](double x, double y) { return -x / (y * y); });
}

Tensor maximum(const Tensor& a, const Tensor& b) {
  // Ties send the gradient to the first argument.
  return binary_op(
      a, b, "maximum", [](double x, double y) { return x >= y ? x : y; },
      [](double x, double y) { return x >= y ? 1.0 : 0.0; },
      [](double x, double y) { return x >= y ? 0.0 : 1.0; });
}

Tensor add_scalar(const Tensor& a, double c) {
  return unary_op(
      a, "add_scalar", [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Tensor mul_scalar(const Tensor& a, double c) {
  return unary_op(
      a, "mul_scalar", [c](double x) { return x * c; }, [c](double, double) { return c; });
}

Tensor neg(const Tensor& a) { return mul_scalar(a, -1.0); }

// ---------------------------------------------------------------- unary maps

Tensor relu(const Tensor& x) {
  return unary_op(
      x, "relu", [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor softplus(const Tensor& x, double beta) {
  using Array = Eigen::ArrayXd;
  const auto xv = x.values();
  const auto n = static_cast<Eigen::Index>(xv.size());
  const Array t = Eigen::Map<const Array>(xv.data(), n) * beta;
  const Array e = (-t.abs()).exp();
  const Array r = (t.max(0.0) + (1.0 + e).log()) / beta;
  std::vector<double> out(r.data(), r.data() + n);
  auto slope = std::make_shared<Array>();
  if (grad_enabled() && x.requires_grad()) {
    *slope = (t >= 0.0).select(1.0 / (1.0 + e), e / (1.0 + e));
  }
  return Tensor::make_op(
      x.shape(), std::move(out), {x},
      [slope](std::span<const double> g, const GradInputs& in) {
        auto gx = in.grad(0);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (*slope)[static_cast<Eigen::Index>(i)];
      },
      "softplus");
}

Tensor sigmoid(const Tensor& x) {
  using Array = Eigen::ArrayXd;
  const auto xv = x.values();
  const auto n = static_cast<Eigen::Index>(xv.size());
  const Array v = Eigen::Map<const Array>(xv.data(), n);
  const Array e = (-v.abs()).exp();
  const Array r = (v >= 0.0).select(1.0 / (1.0 + e), e / (1.0 + e));
  std::vector<double> out(r.data(), r.data() + n);
  auto y = std::make_shared<std::vector<double>>();
  if (grad_enabled() && x.requires_grad()) *y = out;
  return Tensor::make_op(
      x.shape(), std::move(out), {x},
      [y](std::span<const double> g, const GradInputs& in) {
        auto gx = in.grad(0);
        const auto& ya = *y;
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * ya[i] * (1.0 - ya[i]);
      },
      "sigmoid");
}

Tensor tanh(const Tensor& x) {
  return unary_op(
      x, "tanh", [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor exp(const Tensor& x) {
  return unary_op(
      x, "exp", [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  return unary_op(
      x, "log", [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor abs(const Tensor& x) {
  return unary_op(
      x, "abs", [](double v) { return std::abs(v); },
      [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Tensor sqrt(const Tensor& x) {
  return unary_op(
      x, "sqrt", [](double v) { return std::sqrt(v); },
      [](double, double y) { return 0.5 / y; });
}

Tensor square(const Tensor& x) {
  return unary_op(
      x, "square", [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Tensor sin(const Tensor& x) {
  return unary_op(
      x, "sin", [](double v) { return std::sin(v); }, [](double v, double) { return std::cos(v); });
}

Tensor cos(const Tensor& x) {
  return unary_op(
      x, "cos", [](double v) { return std::cos(v); },
      [](double v, double) { return -std::sin(v); });
}

Tensor max_with(const Tensor& x, double c) {
  return unary_op(
      x, "max_with", [c](double v) { return v > c ? v : c; },
      [c](double v, double) { return v > c ? 1.0 : 0.0; });
}

// ---------------------------------------------------------------- linear algebra

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul needs [n, k] x [k, m], got " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  const auto n = static_cast<Eigen::Index>(a.dim(0));
  const auto k = static_cast<Eigen::Index>(a.dim(1));
  const auto m = static_cast<Eigen::Index>(b.dim(1));
  const RowMajor am = ConstMap(a.values().data(), n, k);
  const RowMajor bm = ConstMap(b.values().data(), k, m);
  const RowMajor om = am * bm;
  return Tensor::make_op(
      {a.dim(0), b.dim(1)}, std::vector<double>(om.data(), om.data() + om.size()), {a, b},
      [n, k, m](std::span<const double> g, const GradInputs& in) {
        const RowMajor gm = ConstMap(g.data(), n, m);
        if (in.wants(0)) accumulate(in.grad(0), gm * ConstMap(in.value(1).data(), k, m).transpose());
        if (in.wants(1)) accumulate(in.grad(1), ConstMap(in.value(0).data(), n, k).transpose() * gm);
      },
      "matmul");
}

Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.rank() != 2 || w.rank() != 2 || x.dim(1) != w.dim(0) || b.rank() != 1 || b.dim(0) != w.dim(1)) {
    throw ShapeError("affine needs [n, k] x [k, m] + [m], got " + shape_str(x.shape()) + " x " +
                     shape_str(w.shape()) + " + " + shape_str(b.shape()));
  }
  const auto n = static_cast<Eigen::Index>(x.dim(0));
  const auto k = static_cast<Eigen::Index>(x.dim(1));
  const auto m = static_cast<Eigen::Index>(w.dim(1));
  const RowMajor xm = ConstMap(x.values().data(), n, k);
  const RowMajor wm = ConstMap(w.values().data(), k, m);
  const RowMajor om = xm * wm;
  std::vector<double> out(om.data(), om.data() + om.size());
  const auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i % bv.size()];
  return Tensor::make_op(
      {x.dim(0), w.dim(1)}, std::move(out), {x, w, b},
      [n, k, m](std::span<const double> g, const GradInputs& in) {
        if (in.wants(0) || in.wants(1)) {
          const RowMajor gm = ConstMap(g.data(), n, m);
          if (in.wants(0)) accumulate(in.grad(0), gm * ConstMap(in.value(1).data(), k, m).transpose());
          if (in.wants(1)) accumulate(in.grad(1), ConstMap(in.value(0).data(), n, k).transpose() * gm);
        }
        if (in.wants(2)) {
          auto gb = in.grad(2);
          for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = 0; j < m; ++j) gb[j] += g[i * m + j];
          }
        }
      },
      "affine");
}

// ---------------------------------------------------------------- reductions

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.values()) total += v;
  return Tensor::make_op(
      {}, {total}, {x},
      [](std::span<const double> g, const GradInputs& in) {
        for (double& v : in.grad(0)) v += g[0];
      },
      "sum");
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw ShapeError("mean of an empty tensor");
  return mul_scalar(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor sum(const Tensor& x, std::size_t axis) {
  const AxisSplit s = split_axis(x.shape(), axis);
  Shape out_shape = x.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  std::vector<double> out(s.outer * s.inner, 0.0);
  const auto xv = x.values();
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t e = 0; e < s.extent; ++e)
      for (std::size_t i = 0; i < s.inner; ++i) out[o * s.inner + i] += xv[(o * s.extent + e) * s.inner + i];
  return Tensor::make_op(
      out_shape, std::move(out), {x},
      [s](std::span<const double> g, const GradInputs& in) {
        auto gx = in.grad(0);
        for (std::size_t o = 0; o < s.outer; ++o)
          for (std::size_t e = 0; e < s.extent; ++e)
            for (std::size_t i = 0; i < s.inner; ++i) gx[(o * s.extent + e) * s.inner + i] += g[o * s.inner + i];
      },
      "sum_axis");
}

Tensor mean(const Tensor& x, std::size_t axis) {
  const AxisSplit s = split_axis(x.shape(), axis);
  if (s.extent == 0) throw ShapeError("mean over an empty axis");
  return mul_scalar(sum(x, axis), 1.0 / static_cast<double>(s.extent));
}

// ---------------------------------------------------------------- layout

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) throw ShapeError("concat axis out of range for " + shape_str(first));
  Shape out_shape = first;
  out_shape[axis] = 0;
  std::vector<std::size_t> extents;
  for (const auto& p : parts) {
    const Shape& sh = p.shape();
    bool ok = sh.size() == first.size();
    for (std::size_t k = 0; ok && k < sh.size(); ++k) ok = k == axis || sh[k] == first[k];
    if (!ok) {
      throw ShapeError("concat along axis " + std::to_string(axis) + ": " + shape_str(sh) +
                       " does not match " + shape_str(first));
    }
    extents.push_back(sh[axis]);
    out_shape[axis] += sh[axis];
  }
  const AxisSplit s = split_axis(out_shape, axis);
  std::vector<double> out(shape_numel(out_shape));
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const auto v = parts[p].values();
    const std::size_t block = extents[p] * s.inner;
    for (std::size_t o = 0; o < s.outer; ++o)
      std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(o * block), block,
                  out.begin() + static_cast<std::ptrdiff_t>(o * s.extent * s.inner + offset));
    offset += block;
  }
  return Tensor::make_op(
      out_shape, std::move(out), parts,
      [s, extents](std::span<const double> g, const GradInputs& in) {
        std::size_t offset = 0;
        for (std::size_t p = 0; p < extents.size(); ++p) {
          const std::size_t block = extents[p] * s.inner;
          if (in.wants(p)) {
            auto gp = in.grad(p);
            for (std::size_t o = 0; o < s.outer; ++o)
              for (std::size_t i = 0; i < block; ++i) gp[o * block + i] += g[o * s.extent * s.inner + offset + i];
          }
          offset += block;
        }
      },
      "concat");
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end) {
  const AxisSplit s = split_axis(x.shape(), axis);
  if (begin > end || end > s.extent) {
    throw ShapeError("slice [" + std::to_string(begin) + ", " + std::to_string(end) + ") out of range on axis " +
                     std::to_string(axis) + " of " + shape_str(x.shape()));
  }
  Shape out_shape = x.shape();
  out_shape[axis] = end - begin;
  const std::size_t block = (end - begin) * s.inner;
  std::vector<double> out(s.outer * block);
  const auto xv = x.values();
  for (std::size_t o = 0; o < s.outer; ++o)
    std::copy_n(xv.begin() + static_cast<std::ptrdiff_t>((o * s.extent + begin) * s.inner), block,
                out.begin() + static_cast<std::ptrdiff_t>(o * block));
  return Tensor::make_op(
      out_shape, std::move(out), {x},
      [s, begin, block](std::span<const double> g, const GradInputs& in) {
        auto gx = in.grad(0);
        for (std::size_t o = 0; o < s.outer; ++o)
          for (std::size_t i = 0; i < block; ++i) gx[(o * s.extent + begin) * s.inner + i] += g[o * block + i];
      },
      "slice");
}

Tensor reshape(const Tensor& x, const Shape& shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("cannot reshape " + shape_str(x.shape()) + " to " + shape_str(shape));
  }
  std::vector<double> out(x.values().begin(), x.values().end());
  return Tensor::make_op(
      shape, std::move(out), {x},
      [](std::span<const double> g, const GradInputs& in) {
        auto gx = in.grad(0);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
      },
      "reshape");
}

Tensor broadcast_to(const Tensor& x, const Shape& shape) {
  if (broadcast_shapes(x.shape(), shape) != shape) {
    throw ShapeError("cannot broadcast " + shape_str(x.shape()) + " to " + shape_str(shape));
  }
  auto map = std::make_shared<Broadcast>(make_broadcast(x.shape(), shape));
  const std::size_t n = shape_numel(shape);
  std::vector<double> out(n);
  const auto xv = x.values();
  for (std::size_t i = 0; i < n; ++i) out[i] = xv[(*map)(i)];
  return Tensor::make_op(
      shape, std::move(out), {x},
      [map](std::span<const double> g, const GradInputs& in) {
        auto gx = in.grad(0);
        for (std::size_t i = 0; i < g.size(); ++i) gx[(*map)(i)] += g[i];
      },
      "broadcast_to");
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows) {
  if (x.rank() == 0) throw ShapeError("gather_rows on a scalar");
  const std::size_t n_rows = x.dim(0);
  const std::size_t width = n_rows ? x.numel() / n_rows : 0;
  Shape out_shape = x.shape();
  out_shape[0] = rows.size();
  std::vector<double> out(rows.size() * width);
  const auto xv = x.values();
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= n_rows) {
      throw ShapeError("gather_rows index " + std::to_string(rows[r]) + " out of range for " +
                       shape_str(x.shape()));
    }
    std::copy_n(xv.begin() + static_cast<std::ptrdiff_t>(rows[r] * width), width,
                out.begin() + static_cast<std::ptrdiff_t>(r * width));
  }
  auto idx = std::make_shared<std::vector<std::size_t>>(rows.begin(), rows.end());
  return Tensor::make_op(
      out_shape, std::move(out), {x},
      [idx, width](std::span<const double> g, const GradInputs& in) {
        auto gx = in.grad(0);
        for (std::size_t r = 0; r < idx->size(); ++r)
          for (std::size_t c = 0; c < width; ++c) gx[(*idx)[r] * width + c] += g[r * width + c];
      },
      "gather_rows");
}

}  // namespace pcnr
