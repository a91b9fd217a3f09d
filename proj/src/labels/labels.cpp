#include "gleak/labels.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace gleak::labels {

Tensor head_gradient(const nn::Model& model, const nn::GradientVector& g) {
  const Tensor& dw = g.get(model.head_weight_name());
  if (dw.rank() != 2 || dw.dim(1) != model.num_classes()) {
    throw ShapeError("head gradient has shape " + shape_str(dw.shape()));
  }
  return dw;
}

std::vector<double> column_sums(const Tensor& dw) {
  if (dw.rank() != 2) throw ShapeError("expected a [K,N] matrix, got " + shape_str(dw.shape()));
  const std::size_t K = dw.dim(0), N = dw.dim(1);
  std::vector<double> s(N, 0.0);
  for (std::size_t i = 0; i < K; ++i)
    for (std::size_t j = 0; j < N; ++j) s[j] += dw[i * N + j];
  return s;
}

namespace {

std::vector<std::size_t> classes_by_sum(const std::vector<double>& sums) {
  std::vector<std::size_t> order(sums.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return sums[a] < sums[b]; });
  return order;
}

}  // namespace

std::vector<int> infer_labels_minsum(const Tensor& dw, std::size_t batch) {
  const auto sums = column_sums(dw);
  if (batch > sums.size()) {
    throw std::invalid_argument("min-sum rule needs batch <= classes; use the count rule");
  }
  const auto order = classes_by_sum(sums);
  return std::vector<int>(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(batch));
}

std::vector<std::size_t> infer_label_counts(const Tensor& dw, std::size_t batch) {
  const auto sums = column_sums(dw);
  const std::size_t K = dw.dim(0), N = dw.dim(1);
  std::vector<std::size_t> counts(N, 0);
  if (batch == 0 || N == 0) return counts;

  const double max_w = *std::max_element(dw.data().begin(), dw.data().end());
  std::vector<double> strength(N);
  double total = 0.0;
  for (std::size_t j = 0; j < N; ++j) {
    strength[j] = sums[j] - static_cast<double>(K) * max_w;
    total += strength[j];
  }
  if (total == 0.0) {
    for (std::size_t j = 0; j < N; ++j) counts[j] = batch / N + (j < batch % N ? 1 : 0);
    return counts;
  }
  std::size_t assigned = 0;
  for (std::size_t j = 0; j < N; ++j) {
    const double share = static_cast<double>(batch) * strength[j] / total;
    // Exact multiples must not lose a count to rounding in the division.
    counts[j] = static_cast<std::size_t>(std::floor(share + 1e-9));
    assigned += counts[j];
  }
  const auto order = classes_by_sum(sums);
  for (std::size_t r = 0; assigned < batch; ++r, ++assigned) ++counts[order[r % N]];
  while (assigned > batch) {
    // Only reachable through the rounding guard above; trim from the back.
    for (auto it = order.rbegin(); it != order.rend() && assigned > batch; ++it) {
      if (counts[*it] > 0) {
        --counts[*it];
        --assigned;
      }
    }
  }
  return counts;
}

std::vector<int> labels_from_counts(const std::vector<std::size_t>& counts) {
  std::vector<int> out;
  for (std::size_t j = 0; j < counts.size(); ++j) out.insert(out.end(), counts[j], static_cast<int>(j));
  return out;
}

std::vector<int> infer_labels(const Tensor& dw, std::size_t batch) {
  if (batch <= dw.dim(1)) {
    auto l = infer_labels_minsum(dw, batch);
    std::sort(l.begin(), l.end());
    return l;
  }
  return labels_from_counts(infer_label_counts(dw, batch));
}

}  // namespace gleak::labels
