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

// Dense 64-bit tensors with reverse-mode automatic differentiation.
//
// Every operation that touches a tensor requiring gradients records a node
// holding its inputs and a backward rule. Nodes carry a process-wide creation
// id; because an op's inputs always exist before the op runs, sorting the
// reachable nodes by id gives a topological order, and backward() walks that
// order in reverse, visiting each node once.
//
// Broadcasting follows the numpy rules: shapes are right-aligned and an
// extent of 1 (or a missing leading extent) stretches to match.
//
// A graph belongs to the thread that records it. Parameters (leaves) may be
// shared read-only between graphs, but backward() accumulates into leaf
// gradients, so concurrent backward passes over shared leaves must be merged
// explicitly by the caller.
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pcnr {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

namespace detail {
struct Node;
}

/// Gives a backward rule access to the gradient buffers of its inputs.
class GradInputs {
 public:
  explicit GradInputs(std::span<const std::shared_ptr<detail::Node>> inputs) : inputs_(inputs) {}
  /// True when input i participates in differentiation.
  bool wants(std::size_t i) const;
  /// Gradient buffer of input i (allocated and zeroed on first access).
  std::span<double> grad(std::size_t i) const;
  std::span<const double> value(std::size_t i) const;

 private:
  std::span<const std::shared_ptr<detail::Node>> inputs_;
};

using BackwardFn = std::function<void(std::span<const double> grad_out, const GradInputs& inputs)>;

class Tensor {
 public:
  Tensor();

  static Tensor zeros(const Shape& shape, bool requires_grad = false);
  static Tensor full(const Shape& shape, double value, bool requires_grad = false);
  static Tensor from_values(const Shape& shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;
  bool defined() const { return static_cast<bool>(node_); }

  std::span<const double> values() const;
  /// Writable view of the values. Only meaningful on leaves; mutating an
  /// interior node after it has been consumed invalidates its consumers.
  std::span<double> mutable_values();
  double item() const;
  double operator[](std::size_t flat_index) const { return values()[flat_index]; }

  bool requires_grad() const;
  /// Gradient accumulated by backward(); empty when none has been recorded.
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  std::uint64_t node_id() const;
  const std::string& name() const;
  Tensor& set_name(std::string name);

  /// A leaf holding a copy of the values, cut from the graph.
  Tensor detach() const;

  /// Back-propagates from this scalar. Interior gradients are reset first;
  /// leaf gradients accumulate.
  void backward() const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }

  /// Records an operation. `backward` is kept only when gradient recording is
  /// enabled and at least one input requires a gradient.
  static Tensor make_op(const Shape& shape, std::vector<double> values, std::vector<Tensor> inputs,
                        BackwardFn backward, const char* op_name);

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;
};

/// Disables graph recording on this thread for the guard's lifetime.
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

// Elementwise arithmetic (broadcasting).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor maximum(const Tensor& a, const Tensor& b);

Tensor add_scalar(const Tensor& a, double c);
Tensor mul_scalar(const Tensor& a, double c);
Tensor neg(const Tensor& a);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator-(const Tensor& a) { return neg(a); }
inline Tensor operator+(const Tensor& a, double c) { return add_scalar(a, c); }
inline Tensor operator+(double c, const Tensor& a) { return add_scalar(a, c); }
inline Tensor operator-(const Tensor& a, double c) { return add_scalar(a, -c); }
inline Tensor operator-(double c, const Tensor& a) { return add_scalar(neg(a), c); }
inline Tensor operator*(const Tensor& a, double c) { return mul_scalar(a, c); }
inline Tensor operator*(double c, const Tensor& a) { return mul_scalar(a, c); }

// Unary maps. relu'(0) and abs'(0) are 0.
Tensor relu(const Tensor& x);
/// log(1 + exp(beta x)) / beta
Tensor softplus(const Tensor& x, double beta = 1.0);
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor abs(const Tensor& x);
Tensor sqrt(const Tensor& x);
Tensor square(const Tensor& x);
Tensor sin(const Tensor& x);
Tensor cos(const Tensor& x);
/// max(x, c); the derivative is 1 where x > c and 0 elsewhere.
Tensor max_with(const Tensor& x, double c);

/// [n, k] x [k, m] -> [n, m]
Tensor matmul(const Tensor& a, const Tensor& b);
/// x w + b with x [n, k], w [k, m], b [m].
Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// Reduces one axis; the axis is removed from the shape.
Tensor sum(const Tensor& x, std::size_t axis);
Tensor mean(const Tensor& x, std::size_t axis);

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
/// Elements [begin, end) along `axis`.
Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end);
Tensor reshape(const Tensor& x, const Shape& shape);
Tensor broadcast_to(const Tensor& x, const Shape& shape);
/// Rows of a tensor whose leading axis is indexed.
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows);

/// Shape that results from broadcasting a against b, or ShapeError.
Shape broadcast_shapes(const Shape& a, const Shape& b);

}  // namespace pcnr
