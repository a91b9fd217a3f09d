#pragma once
// Reverse-mode automatic differentiation over Tensor values.
//
// Every backward rule is written in terms of traced operations, so asking
// grad() to retain the trace yields gradients that can be differentiated
// again. That is what makes it possible to take the derivative of a
// gradient-matching distance with respect to the input images.

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <string_view>
#include <vector>

#include "gleak/tensor.hpp"
#include "gleak/tensor_ops.hpp"

namespace gleak::ad {

enum class OpKind {
  Leaf,
  MatMul,
  Conv2d,
  Conv2dInputGrad,
  Conv2dWeightGrad,
  Add,
  Sub,
  Mul,
  Div,
  Neg,
  Scale,
  Exp,
  Log,
  Sqrt,
  Abs,
  Relu,
  AvgPool2d,
  AvgPool2dGrad,
  Reshape,
  Pad,
  Slice,
  Concat,
  Sum,
  Mean,
  L2Norm,
  BroadcastTo,
  SumTo,
  LogSoftmax,
  SoftmaxCrossEntropy,
};

std::string_view op_name(OpKind op);

class AutodiffError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class Var;

using BackwardFn = std::function<std::vector<Var>(const Var&, const std::vector<bool>&)>;

struct TraceNode {
  OpKind op = OpKind::Leaf;
  Tensor value;
  std::vector<Var> inputs;
  // Maps the upstream gradient to one gradient per input. `need[i]` is false
  // for inputs whose gradient is not wanted; those entries may be left empty.
  BackwardFn backward;
  bool requires_grad = false;
  // 0 for the primal pass; n for nodes created while differentiating n times.
  int order = 0;
};

/// Handle to a traced value. Cheap to copy.
class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);

  static Var constant(Tensor value) { return Var(std::move(value), false); }
  static Var leaf(Tensor value) { return Var(std::move(value), true); }

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t size() const { return node_->value.size(); }
  double item() const { return node_->value.item(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  OpKind op() const { return node_->op; }
  int order() const { return node_->order; }
  const TraceNode* node() const { return node_.get(); }

  // Same value, cut from the trace.
  Var detach() const { return Var(value(), false); }

 private:
  friend Var make_result(OpKind, Tensor, std::vector<Var>, BackwardFn);
  std::shared_ptr<TraceNode> node_;
};

// Builds an op result. Records a trace node when tracing is enabled and any
// input requires a gradient; otherwise returns an untraced constant.
Var make_result(OpKind op, Tensor value, std::vector<Var> inputs, BackwardFn backward);

/// Tracing switch for the current thread.
class GradMode {
 public:
  static bool enabled();
  static void set_enabled(bool on);
};

class NoGradGuard {
 public:
  NoGradGuard() : prev_(GradMode::enabled()) { GradMode::set_enabled(false); }
  ~NoGradGuard() { GradMode::set_enabled(prev_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

// ---- operators -----------------------------------------------------------

Var matmul(const Var& a, const Var& b, bool trans_a = false, bool trans_b = false);
Var conv2d(const Var& x, const Var& w, ops::Conv2dGeometry geo = {});
Var conv2d_input_grad(const Var& gy, const Var& w, const Shape& x_shape, ops::Conv2dGeometry geo);
Var conv2d_weight_grad(const Var& x, const Var& gy, const Shape& w_shape, ops::Conv2dGeometry geo);

// Binary element-wise ops broadcast numpy-style.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var neg(const Var& a);
Var scale(const Var& a, double c);
Var exp(const Var& a);
Var log(const Var& a);
Var sqrt(const Var& a);
Var abs(const Var& a);
Var relu(const Var& a);

Var avgpool2d(const Var& x, std::size_t k);
Var avgpool2d_grad(const Var& gy, std::size_t k, const Shape& x_shape);
Var reshape(const Var& x, const Shape& shape);
Var pad(const Var& x, const Shape& before, const Shape& after);
Var slice(const Var& x, const Shape& start, const Shape& stop);
Var concat(const std::vector<Var>& xs, std::size_t axis);
Var broadcast_to(const Var& x, const Shape& shape);
Var sum_to(const Var& x, const Shape& shape);

Var sum(const Var& x);   // rank-0 result
Var mean(const Var& x);  // rank-0 result
Var l2norm(const Var& x);
Var log_softmax(const Var& z);
// Mean over the batch of -sum_j t[b,j] log softmax(z)[b,j]; targets may be
// soft (probability rows) and may themselves be traced.
Var softmax_cross_entropy(const Var& logits, const Var& targets);
Var softmax_cross_entropy(const Var& logits, const std::vector<int>& labels);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator/(const Var& a, const Var& b) { return div(a, b); }
inline Var operator-(const Var& a) { return neg(a); }
inline Var operator*(double c, const Var& a) { return scale(a, c); }
inline Var operator*(const Var& a, double c) { return scale(a, c); }

// ---- generic entry point ---------------------------------------------------

struct OpAttributes {
  ops::Conv2dGeometry conv;
  bool trans_a = false;
  bool trans_b = false;
  std::size_t pool = 2;
  double factor = 1.0;  // scale
  std::size_t axis = 0;
  Shape shape;  // reshape / broadcast target, or adjoint input shape
  Shape start;  // slice start or pad-before
  Shape stop;   // slice stop or pad-after
  std::vector<int> labels;
};

/// Dispatches an operator by tag. Shape errors and domain errors propagate
/// from the operator itself.
Var apply(OpKind op, const std::vector<Var>& inputs, const OpAttributes& attrs = {});

// ---- differentiation -------------------------------------------------------

struct GradOptions {
  // Record the backward computation so the returned gradients can be
  // differentiated again.
  bool retain_trace = false;
  // Return zero gradients for wrt entries the output does not depend on
  // instead of raising.
  bool allow_unused = false;
};

/// d output / d wrt[i] for a scalar output.
std::vector<Var> grad(const Var& output, const std::vector<Var>& wrt, GradOptions opts = {});

}  // namespace gleak::ad
