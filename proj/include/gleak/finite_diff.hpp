#pragma once

#include <functional>

#include "gleak/tensor.hpp"

namespace gleak {

/// Central-difference gradient of a scalar function, one coordinate at a time.
Tensor finite_difference_gradient(const std::function<double(const Tensor&)>& f, const Tensor& x,
                                  double h = 1e-5);

}  // namespace gleak
