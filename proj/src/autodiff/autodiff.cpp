#include "gleak/autodiff.hpp"

#include <unordered_map>
#include <unordered_set>
#include <utility>

namespace gleak::ad {
namespace {

thread_local bool g_grad_enabled = true;
thread_local int g_backward_depth = 0;

using Grads = std::vector<Var>;

std::pair<Var, Var> align(const Var& a, const Var& b) {
  if (a.shape() == b.shape()) return {a, b};
  const Shape s = ops::broadcast_shape(a.shape(), b.shape());
  return {broadcast_to(a, s), broadcast_to(b, s)};
}

Var ones_like(const Shape& s) { return Var::constant(Tensor::full(s, 1.0)); }

}  // namespace

std::string_view op_name(OpKind op) {
  switch (op) {
    case OpKind::Leaf: return "leaf";
    case OpKind::MatMul: return "matmul";
    case OpKind::Conv2d: return "conv2d";
    case OpKind::Conv2dInputGrad: return "conv2d_input_grad";
    case OpKind::Conv2dWeightGrad: return "conv2d_weight_grad";
    case OpKind::Add: return "add";
    case OpKind::Sub: return "sub";
    case OpKind::Mul: return "mul";
    case OpKind::Div: return "div";
    case OpKind::Neg: return "neg";
    case OpKind::Scale: return "scale";
    case OpKind::Exp: return "exp";
    case OpKind::Log: return "log";
    case OpKind::Sqrt: return "sqrt";
    case OpKind::Abs: return "abs";
    case OpKind::Relu: return "relu";
    case OpKind::AvgPool2d: return "avgpool2d";
    case OpKind::AvgPool2dGrad: return "avgpool2d_grad";
    case OpKind::Reshape: return "reshape";
    case OpKind::Pad: return "pad";
    case OpKind::Slice: return "slice";
    case OpKind::Concat: return "concat";
    case OpKind::Sum: return "sum";
    case OpKind::Mean: return "mean";
    case OpKind::L2Norm: return "l2norm";
    case OpKind::BroadcastTo: return "broadcast_to";
    case OpKind::SumTo: return "sum_to";
    case OpKind::LogSoftmax: return "log_softmax";
    case OpKind::SoftmaxCrossEntropy: return "softmax_cross_entropy";
  }
  return "unknown";
}

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<TraceNode>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

bool GradMode::enabled() { return g_grad_enabled; }
void GradMode::set_enabled(bool on) { g_grad_enabled = on; }

Var make_result(OpKind op, Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  bool track = false;
  if (g_grad_enabled) {
    for (const Var& v : inputs) track = track || v.requires_grad();
  }
  if (!track) return Var(std::move(value), false);
  Var out;
  out.node_ = std::make_shared<TraceNode>();
  out.node_->op = op;
  out.node_->value = std::move(value);
  out.node_->inputs = std::move(inputs);
  out.node_->backward = std::move(backward);
  out.node_->requires_grad = true;
  out.node_->order = g_backward_depth;
  return out;
}

// ---- linear algebra ----------------------------------------------------------

Var matmul(const Var& a, const Var& b, bool trans_a, bool trans_b) {
  Tensor v = ops::matmul(a.value(), b.value(), trans_a, trans_b);
  return make_result(OpKind::MatMul, std::move(v), {a, b},
                     [a, b, trans_a, trans_b](const Var& g, const std::vector<bool>& need) {
                       Grads out(2);
                       if (need[0]) {
                         out[0] = trans_a ? matmul(b, g, trans_b, true)
                                          : matmul(g, b, false, !trans_b);
                       }
                       if (need[1]) {
                         out[1] = trans_b ? matmul(g, a, true, trans_a)
                                          : matmul(a, g, !trans_a, false);
                       }
                       return out;
                     });
}

Var conv2d(const Var& x, const Var& w, ops::Conv2dGeometry geo) {
  Tensor v = ops::conv2d(x.value(), w.value(), geo);
  return make_result(OpKind::Conv2d, std::move(v), {x, w},
                     [x, w, geo](const Var& g, const std::vector<bool>& need) {
                       Grads out(2);
                       if (need[0]) out[0] = conv2d_input_grad(g, w, x.shape(), geo);
                       if (need[1]) out[1] = conv2d_weight_grad(x, g, w.shape(), geo);
                       return out;
                     });
}

Var conv2d_input_grad(const Var& gy, const Var& w, const Shape& x_shape, ops::Conv2dGeometry geo) {
  Tensor v = ops::conv2d_input_grad(gy.value(), w.value(), x_shape, geo);
  return make_result(OpKind::Conv2dInputGrad, std::move(v), {gy, w},
                     [gy, w, geo](const Var& g, const std::vector<bool>& need) {
                       Grads out(2);
                       if (need[0]) out[0] = conv2d(g, w, geo);
                       if (need[1]) out[1] = conv2d_weight_grad(g, gy, w.shape(), geo);
                       return out;
                     });
}

Var conv2d_weight_grad(const Var& x, const Var& gy, const Shape& w_shape, ops::Conv2dGeometry geo) {
  Tensor v = ops::conv2d_weight_grad(x.value(), gy.value(), w_shape, geo);
  return make_result(OpKind::Conv2dWeightGrad, std::move(v), {x, gy},
                     [x, gy, geo](const Var& g, const std::vector<bool>& need) {
                       Grads out(2);
                       if (need[0]) out[0] = conv2d_input_grad(gy, g, x.shape(), geo);
                       if (need[1]) out[1] = conv2d(x, g, geo);
                       return out;
                     });
}

// ---- element-wise --------------------------------------------------------------

Var add(const Var& a0, const Var& b0) {
  auto [a, b] = align(a0, b0);
  return make_result(OpKind::Add, ops::add(a.value(), b.value()), {a, b},
                     [](const Var& g, const std::vector<bool>&) { return Grads{g, g}; });
}

Var sub(const Var& a0, const Var& b0) {
  auto [a, b] = align(a0, b0);
  return make_result(OpKind::Sub, ops::sub(a.value(), b.value()), {a, b},
                     [](const Var& g, const std::vector<bool>& need) {
                       Grads out{g, Var()};
                       if (need[1]) out[1] = neg(g);
                       return out;
                     });
}

Var mul(const Var& a0, const Var& b0) {
  auto [a, b] = align(a0, b0);
  return make_result(OpKind::Mul, ops::mul(a.value(), b.value()), {a, b},
                     [a, b](const Var& g, const std::vector<bool>& need) {
                       Grads out(2);
                       if (need[0]) out[0] = mul(g, b);
                       if (need[1]) out[1] = mul(g, a);
                       return out;
                     });
}

Var div(const Var& a0, const Var& b0) {
  auto [a, b] = align(a0, b0);
  return make_result(OpKind::Div, ops::div(a.value(), b.value()), {a, b},
                     [a, b](const Var& g, const std::vector<bool>& need) {
                       Grads out(2);
                       if (need[0]) out[0] = div(g, b);
                       if (need[1]) out[1] = neg(div(mul(g, a), mul(b, b)));
                       return out;
                     });
}

Var neg(const Var& a) {
  return make_result(OpKind::Neg, ops::neg(a.value()), {a},
                     [](const Var& g, const std::vector<bool>&) { return Grads{neg(g)}; });
}

Var scale(const Var& a, double c) {
  return make_result(OpKind::Scale, ops::scale(a.value(), c), {a},
                     [c](const Var& g, const std::vector<bool>&) { return Grads{scale(g, c)}; });
}

Var exp(const Var& a) {
  return make_result(OpKind::Exp, ops::exp(a.value()), {a},
                     [a](const Var& g, const std::vector<bool>&) { return Grads{mul(g, exp(a))}; });
}

Var log(const Var& a) {
  return make_result(OpKind::Log, ops::log(a.value()), {a},
                     [a](const Var& g, const std::vector<bool>&) { return Grads{div(g, a)}; });
}

Var sqrt(const Var& a) {
  return make_result(OpKind::Sqrt, ops::sqrt(a.value()), {a},
                     [a](const Var& g, const std::vector<bool>&) {
                       return Grads{div(scale(g, 0.5), sqrt(a))};
                     });
}

Var abs(const Var& a) {
  return make_result(OpKind::Abs, ops::abs(a.value()), {a},
                     [a](const Var& g, const std::vector<bool>&) {
                       return Grads{mul(g, Var::constant(ops::sign(a.value())))};
                     });
}

Var relu(const Var& a) {
  return make_result(OpKind::Relu, ops::relu(a.value()), {a},
                     [a](const Var& g, const std::vector<bool>&) {
                       return Grads{mul(g, Var::constant(ops::relu_mask(a.value())))};
                     });
}

// ---- structural ------------------------------------------------------------------

Var avgpool2d(const Var& x, std::size_t k) {
  return make_result(OpKind::AvgPool2d, ops::avgpool2d(x.value(), k), {x},
                     [k, shape = x.shape()](const Var& g, const std::vector<bool>&) {
                       return Grads{avgpool2d_grad(g, k, shape)};
                     });
}

Var avgpool2d_grad(const Var& gy, std::size_t k, const Shape& x_shape) {
  return make_result(OpKind::AvgPool2dGrad, ops::avgpool2d_grad(gy.value(), k, x_shape), {gy},
                     [k](const Var& g, const std::vector<bool>&) {
                       return Grads{avgpool2d(g, k)};
                     });
}

Var reshape(const Var& x, const Shape& shape) {
  return make_result(OpKind::Reshape, x.value().reshaped(shape), {x},
                     [shape = x.shape()](const Var& g, const std::vector<bool>&) {
                       return Grads{reshape(g, shape)};
                     });
}

Var pad(const Var& x, const Shape& before, const Shape& after) {
  return make_result(OpKind::Pad, ops::pad(x.value(), before, after), {x},
                     [before, shape = x.shape()](const Var& g, const std::vector<bool>&) {
                       Shape stop(shape.size());
                       for (std::size_t i = 0; i < shape.size(); ++i) stop[i] = before[i] + shape[i];
                       return Grads{slice(g, before, stop)};
                     });
}

Var slice(const Var& x, const Shape& start, const Shape& stop) {
  return make_result(OpKind::Slice, ops::slice(x.value(), start, stop), {x},
                     [start, stop, shape = x.shape()](const Var& g, const std::vector<bool>&) {
                       Shape after(shape.size());
                       for (std::size_t i = 0; i < shape.size(); ++i) after[i] = shape[i] - stop[i];
                       return Grads{pad(g, start, after)};
                     });
}

Var concat(const std::vector<Var>& xs, std::size_t axis) {
  std::vector<Tensor> vals;
  vals.reserve(xs.size());
  for (const Var& v : xs) vals.push_back(v.value());
  Tensor out = ops::concat(vals, axis);
  return make_result(OpKind::Concat, std::move(out), xs,
                     [xs, axis](const Var& g, const std::vector<bool>& need) {
                       Grads grads(xs.size());
                       std::size_t offset = 0;
                       for (std::size_t i = 0; i < xs.size(); ++i) {
                         const Shape& s = xs[i].shape();
                         if (need[i]) {
                           Shape start(s.size(), 0), stop = g.shape();
                           start[axis] = offset;
                           stop[axis] = offset + s[axis];
                           grads[i] = slice(g, start, stop);
                         }
                         offset += s[axis];
                       }
                       return grads;
                     });
}

Var broadcast_to(const Var& x, const Shape& shape) {
  if (x.shape() == shape) return x;
  return make_result(OpKind::BroadcastTo, ops::broadcast_to(x.value(), shape), {x},
                     [src = x.shape()](const Var& g, const std::vector<bool>&) {
                       return Grads{sum_to(g, src)};
                     });
}

Var sum_to(const Var& x, const Shape& shape) {
  if (x.shape() == shape) return x;
  return make_result(OpKind::SumTo, ops::sum_to(x.value(), shape), {x},
                     [src = x.shape()](const Var& g, const std::vector<bool>&) {
                       return Grads{broadcast_to(g, src)};
                     });
}

// ---- reductions ------------------------------------------------------------------

Var sum(const Var& x) {
  return make_result(OpKind::Sum, Tensor::scalar(ops::sum(x.value())), {x},
                     [src = x.shape()](const Var& g, const std::vector<bool>&) {
                       return Grads{broadcast_to(g, src)};
                     });
}

Var mean(const Var& x) {
  const double inv = 1.0 / static_cast<double>(x.size());
  return make_result(OpKind::Mean, Tensor::scalar(ops::sum(x.value()) * inv), {x},
                     [src = x.shape(), inv](const Var& g, const std::vector<bool>&) {
                       return Grads{broadcast_to(scale(g, inv), src)};
                     });
}

Var l2norm(const Var& x) {
  const double n = ops::l2norm(x.value());
  return make_result(OpKind::L2Norm, Tensor::scalar(n), {x},
                     [x](const Var& g, const std::vector<bool>&) {
                       if (ops::l2norm(x.value()) == 0.0) {
                         // Subgradient 0 at the origin.
                         return Grads{Var::constant(Tensor(x.shape()))};
                       }
                       return Grads{mul(x, div(g, l2norm(x)))};
                     });
}

Var log_softmax(const Var& z) {
  return make_result(OpKind::LogSoftmax, ops::log_softmax(z.value()), {z},
                     [z](const Var& g, const std::vector<bool>&) {
                       const Var p = exp(log_softmax(z));
                       const Var row = sum_to(g, {z.shape()[0], 1});
                       return Grads{sub(g, mul(p, row))};
                     });
}

Var softmax_cross_entropy(const Var& logits, const Var& targets) {
  if (logits.shape().size() != 2 || logits.shape() != targets.shape()) {
    throw ShapeError("softmax_cross_entropy: logits " + shape_str(logits.shape()) +
                     " and targets " + shape_str(targets.shape()) + " must be equal [B,N]");
  }
  const double inv_b = 1.0 / static_cast<double>(logits.shape()[0]);
  const Tensor logp = ops::log_softmax(logits.value());
  const double loss = -ops::dot(targets.value(), logp) * inv_b;
  return make_result(
      OpKind::SoftmaxCrossEntropy, Tensor::scalar(loss), {logits, targets},
      [logits, targets, inv_b](const Var& g, const std::vector<bool>& need) {
        Grads out(2);
        const Var gs = scale(g, inv_b);
        const Var lp = log_softmax(logits);
        if (need[0]) {
          const Var p = exp(lp);
          const Var mass = sum_to(targets, {logits.shape()[0], 1});
          out[0] = mul(sub(mul(p, mass), targets), gs);
        }
        if (need[1]) out[1] = neg(mul(lp, gs));
        return out;
      });
}

Var softmax_cross_entropy(const Var& logits, const std::vector<int>& labels) {
  if (logits.shape().size() != 2 || logits.shape()[0] != labels.size()) {
    throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                     " labels for logits " + shape_str(logits.shape()));
  }
  return softmax_cross_entropy(logits, Var::constant(ops::one_hot(labels, logits.shape()[1])));
}

// ---- dispatch --------------------------------------------------------------------

Var apply(OpKind op, const std::vector<Var>& in, const OpAttributes& at) {
  auto need = [&](std::size_t n) {
    if (in.size() != n) {
      throw AutodiffError(std::string(op_name(op)) + ": expected " + std::to_string(n) +
                          " inputs, got " + std::to_string(in.size()));
    }
  };
  switch (op) {
    case OpKind::Leaf: need(1); return in[0];
    case OpKind::MatMul: need(2); return matmul(in[0], in[1], at.trans_a, at.trans_b);
    case OpKind::Conv2d: need(2); return conv2d(in[0], in[1], at.conv);
    case OpKind::Conv2dInputGrad: need(2); return conv2d_input_grad(in[0], in[1], at.shape, at.conv);
    case OpKind::Conv2dWeightGrad:
      need(2);
      return conv2d_weight_grad(in[0], in[1], at.shape, at.conv);
    case OpKind::Add: need(2); return add(in[0], in[1]);
    case OpKind::Sub: need(2); return sub(in[0], in[1]);
    case OpKind::Mul: need(2); return mul(in[0], in[1]);
    case OpKind::Div: need(2); return div(in[0], in[1]);
    case OpKind::Neg: need(1); return neg(in[0]);
    case OpKind::Scale: need(1); return scale(in[0], at.factor);
    case OpKind::Exp: need(1); return exp(in[0]);
    case OpKind::Log: need(1); return log(in[0]);
    case OpKind::Sqrt: need(1); return sqrt(in[0]);
    case OpKind::Abs: need(1); return abs(in[0]);
    case OpKind::Relu: need(1); return relu(in[0]);
    case OpKind::AvgPool2d: need(1); return avgpool2d(in[0], at.pool);
    case OpKind::AvgPool2dGrad: need(1); return avgpool2d_grad(in[0], at.pool, at.shape);
    case OpKind::Reshape: need(1); return reshape(in[0], at.shape);
    case OpKind::Pad: need(1); return pad(in[0], at.start, at.stop);
    case OpKind::Slice: need(1); return slice(in[0], at.start, at.stop);
    case OpKind::Concat: return concat(in, at.axis);
    case OpKind::Sum: need(1); return sum(in[0]);
    case OpKind::Mean: need(1); return mean(in[0]);
    case OpKind::L2Norm: need(1); return l2norm(in[0]);
    case OpKind::BroadcastTo: need(1); return broadcast_to(in[0], at.shape);
    case OpKind::SumTo: need(1); return sum_to(in[0], at.shape);
    case OpKind::LogSoftmax: need(1); return log_softmax(in[0]);
    case OpKind::SoftmaxCrossEntropy:
      if (in.size() == 2) return softmax_cross_entropy(in[0], in[1]);
      need(1);
      return softmax_cross_entropy(in[0], at.labels);
  }
  throw AutodiffError("apply: unknown op");
}

// ---- reverse sweep ---------------------------------------------------------------

std::vector<Var> grad(const Var& output, const std::vector<Var>& wrt, GradOptions opts) {
  if (!output.defined() || output.size() != 1) {
    throw AutodiffError("grad: output must be a scalar");
  }
  for (const Var& w : wrt) {
    if (!w.defined()) throw AutodiffError("grad: undefined wrt entry");
  }

  // Post-order over traced nodes; inputs precede their consumers.
  std::vector<const TraceNode*> post;
  std::unordered_set<const TraceNode*> visited;
  if (output.requires_grad()) {
    std::vector<std::pair<const TraceNode*, std::size_t>> stack;
    stack.emplace_back(output.node(), 0);
    visited.insert(output.node());
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      if (next < node->inputs.size()) {
        const Var& in = node->inputs[next++];
        if (in.requires_grad() && visited.insert(in.node()).second) {
          stack.emplace_back(in.node(), 0);
        }
        continue;
      }
      post.push_back(node);
      stack.pop_back();
    }
  }

  std::unordered_set<const TraceNode*> targets;
  for (const Var& w : wrt) targets.insert(w.node());

  // Nodes through which some wrt entry is reachable.
  std::unordered_set<const TraceNode*> relevant;
  for (const TraceNode* n : post) {
    bool r = targets.count(n) > 0;
    for (const Var& in : n->inputs) r = r || relevant.count(in.node()) > 0;
    if (r) relevant.insert(n);
  }

  std::vector<Var> result(wrt.size());
  const bool prev_mode = g_grad_enabled;
  g_grad_enabled = opts.retain_trace;
  if (opts.retain_trace) ++g_backward_depth;
  struct Restore {
    bool mode;
    bool retained;
    ~Restore() {
      g_grad_enabled = mode;
      if (retained) --g_backward_depth;
    }
  } restore{prev_mode, opts.retain_trace};

  std::unordered_map<const TraceNode*, Var> grads;
  if (output.requires_grad()) grads.emplace(output.node(), ones_like(output.shape()));

  for (auto it = post.rbegin(); it != post.rend(); ++it) {
    const TraceNode* node = *it;
    if (!relevant.count(node) || !node->backward) continue;
    auto g_it = grads.find(node);
    if (g_it == grads.end()) continue;
    const Var upstream = g_it->second;
    // Gradients of intermediate nodes are no longer needed once consumed.
    if (!targets.count(node)) grads.erase(g_it);

    std::vector<bool> need(node->inputs.size());
    for (std::size_t i = 0; i < need.size(); ++i) {
      need[i] = node->inputs[i].requires_grad() && relevant.count(node->inputs[i].node()) > 0;
    }
    std::vector<Var> in_grads = node->backward(upstream, need);
    for (std::size_t i = 0; i < need.size(); ++i) {
      if (!need[i] || !in_grads[i].defined()) continue;
      const TraceNode* key = node->inputs[i].node();
      auto [slot, inserted] = grads.try_emplace(key, in_grads[i]);
      if (!inserted) slot->second = add(slot->second, in_grads[i]);
    }
  }

  for (std::size_t i = 0; i < wrt.size(); ++i) {
    auto g_it = grads.find(wrt[i].node());
    if (g_it != grads.end()) {
      result[i] = g_it->second;
    } else if (opts.allow_unused || (wrt[i].requires_grad() && visited.count(wrt[i].node()))) {
      result[i] = Var::constant(Tensor(wrt[i].shape()));
    } else {
      throw AutodiffError("grad: wrt tensor of shape " + shape_str(wrt[i].shape()) +
                          " is absent from the trace of the output");
    }
  }
  return result;
}

}  // namespace gleak::ad
