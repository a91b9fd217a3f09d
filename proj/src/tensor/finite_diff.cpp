#include "gleak/finite_diff.hpp"

#include <vector>

namespace gleak {

Tensor finite_difference_gradient(const std::function<double(const Tensor&)>& f, const Tensor& x,
                                  double h) {
  std::vector<double> probe = x.to_vector();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double fp = f(Tensor(x.shape(), probe));
    probe[i] = orig - h;
    const double fm = f(Tensor(x.shape(), probe));
    probe[i] = orig;
    out[i] = (fp - fm) / (2.0 * h);
  }
  return Tensor(x.shape(), std::move(out));
}

}  // namespace gleak
