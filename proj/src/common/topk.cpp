#include "gleak/topk.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace gleak {

std::size_t count_for_fraction(double fraction, std::size_t n) {
  if (!(fraction > 0.0)) return 0;
  const double raw = fraction * static_cast<double>(n);
  const double c = std::ceil(raw - 1e-9 * std::max(1.0, raw));
  return std::min(n, static_cast<std::size_t>(std::max(0.0, c)));
}

std::vector<std::size_t> top_magnitude(std::span<const double> g, std::size_t count) {
  count = std::min(count, g.size());
  std::vector<std::size_t> idx(g.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  auto before = [&](std::size_t a, std::size_t b) {
    const double ma = std::fabs(g[a]), mb = std::fabs(g[b]);
    return ma != mb ? ma > mb : a < b;
  };
  if (count < idx.size()) {
    std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(count), idx.end(), before);
  }
  idx.resize(count);
  std::sort(idx.begin(), idx.end());
  return idx;
}

std::vector<double> top_magnitude_mask(std::span<const double> g, std::size_t count) {
  std::vector<double> mask(g.size(), 0.0);
  for (std::size_t i : top_magnitude(g, count)) mask[i] = 1.0;
  return mask;
}

}  // namespace gleak
