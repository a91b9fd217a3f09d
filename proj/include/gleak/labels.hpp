#pragma once
// Label recovery from the classifier head's weight gradient dW [K, N]
// (features x classes). With non-negative features the true classes are the
// columns whose sums come out most negative.

#include <cstddef>
#include <vector>

#include "gleak/model.hpp"
#include "gleak/tensor.hpp"

namespace gleak::labels {

// dW for the model head, taken from a gradient vector by name.
Tensor head_gradient(const nn::Model& model, const nn::GradientVector& g);

// Column sums of a [K, N] matrix.
std::vector<double> column_sums(const Tensor& dw);

// The B classes with the smallest column sums, ascending by sum, ties by
// class index. Throws std::invalid_argument when B > N.
std::vector<int> infer_labels_minsum(const Tensor& dw, std::size_t batch);

// Per-class counts c_j = floor(B * sum_i(dW[i,j] - maxW) / sum_ij(dW - maxW))
// with maxW the global maximum, then topped up one at a time starting from the
// lowest column sum until the counts reach B. An all-equal matrix gives a
// uniform split with the remainder on the lowest class indices.
std::vector<std::size_t> infer_label_counts(const Tensor& dw, std::size_t batch);

// Expands counts into a label list in class order.
std::vector<int> labels_from_counts(const std::vector<std::size_t>& counts);

// Min-sum when the batch fits in the class count, counts otherwise.
std::vector<int> infer_labels(const Tensor& dw, std::size_t batch);

}  // namespace gleak::labels
