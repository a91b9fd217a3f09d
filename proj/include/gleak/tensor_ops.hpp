#pragma once
// Value-level tensor arithmetic (no tracing). The autodiff layer builds on
// these; metrics and defenses use them directly.

#include <cstddef>
#include <vector>

#include "gleak/tensor.hpp"

namespace gleak::ops {

struct Conv2dGeometry {
  std::size_t stride = 1;
  std::size_t pad = 0;
};

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);  // DomainError on a zero divisor
Tensor scale(const Tensor& a, double c);
Tensor neg(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);   // DomainError on non-positive input
Tensor sqrt(const Tensor& a);  // DomainError on negative input
Tensor abs(const Tensor& a);
Tensor sign(const Tensor& a);       // -1, 0, +1
Tensor relu(const Tensor& a);
Tensor relu_mask(const Tensor& a);  // 1 where a > 0 else 0

double sum(const Tensor& a);
double dot(const Tensor& a, const Tensor& b);
double l2norm(const Tensor& a);

// C = op(A) op(B) for rank-2 tensors.
Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a = false, bool trans_b = false);

// x: [B,C,H,W], w: [O,C,kh,kw] -> [B,O,Ho,Wo], cross-correlation with zero padding.
Tensor conv2d(const Tensor& x, const Tensor& w, Conv2dGeometry geo);
// Adjoint of conv2d with respect to x, evaluated at upstream gradient gy.
Tensor conv2d_input_grad(const Tensor& gy, const Tensor& w, const Shape& x_shape,
                         Conv2dGeometry geo);
// Adjoint of conv2d with respect to w.
Tensor conv2d_weight_grad(const Tensor& x, const Tensor& gy, const Shape& w_shape,
                          Conv2dGeometry geo);

// Non-overlapping k x k mean pooling on [B,C,H,W]; H and W must be divisible by k.
Tensor avgpool2d(const Tensor& x, std::size_t k);
Tensor avgpool2d_grad(const Tensor& gy, std::size_t k, const Shape& x_shape);

Tensor pad(const Tensor& x, const Shape& before, const Shape& after);
Tensor slice(const Tensor& x, const Shape& start, const Shape& stop);
Tensor concat(const std::vector<Tensor>& xs, std::size_t axis);

// Numpy-style broadcasting (right-aligned) and its adjoint reduction.
Shape broadcast_shape(const Shape& a, const Shape& b);
Tensor broadcast_to(const Tensor& x, const Shape& shape);
Tensor sum_to(const Tensor& x, const Shape& shape);

// Row-wise log-softmax of a [B,N] tensor.
Tensor log_softmax(const Tensor& z);
Tensor softmax(const Tensor& z);

Tensor one_hot(const std::vector<int>& labels, std::size_t classes);

}  // namespace gleak::ops
