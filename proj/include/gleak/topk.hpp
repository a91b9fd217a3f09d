#pragma once
// Magnitude-ordered index selection shared by sparsification, exposure bands,
// and partial gradient matching. Order is |g| descending, ties by ascending
// flat index, so every selection is a prefix of one fixed total order.

#include <cstddef>
#include <span>
#include <vector>

namespace gleak {

// ceil(fraction * n) clamped to [0, n], tolerant of representation error in
// the product (0.7 * 10 must give 7, not 8).
std::size_t count_for_fraction(double fraction, std::size_t n);

// Indices of the `count` largest-magnitude elements, returned ascending.
std::vector<std::size_t> top_magnitude(std::span<const double> g, std::size_t count);

// Same selection as a 0/1 mask of length g.size().
std::vector<double> top_magnitude_mask(std::span<const double> g, std::size_t count);

}  // namespace gleak
