#include <algorithm>
#include <cmath>
#include <numeric>

#include "gleak/metrics.hpp"
#include "gleak/rng.hpp"
#include "gleak/tensor_ops.hpp"

namespace gleak::metrics {

MuL mu_l_estimate(const Tensor& x_prime, const Tensor& x, const Tensor& grad) {
  if (x_prime.size() != x.size() || grad.size() != x.size()) throw ShapeError("mu_l_estimate: size mismatch");
  double dd = 0, dg = 0, gg = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x_prime[i] - x[i];
    dd += d * d;
    dg += d * grad[i];
    gg += grad[i] * grad[i];
  }
  if (dd == 0.0) throw DomainError("mu/L undefined at x' == x");
  MuL r{dg / dd, gg / dd, 0.0};
  r.ratio = gg == 0.0 ? 0.0 : 2.0 * dg / gg;
  return r;
}

double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) throw std::invalid_argument("pearson: need two equal series");
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) throw DomainError("pearson: constant series");
  return sab / std::sqrt(saa * sbb);
}

FisherReport fisher_correlation(const nn::Model& model, const nn::ParameterSet& params,
                                const Tensor& images, const std::vector<int>& labels,
                                std::size_t max_elements, std::uint64_t seed) {
  const std::size_t head = params.layout().index_of(model.head_weight_name());
  const std::size_t B = images.dim(0);
  if (labels.size() != B) throw std::invalid_argument("fisher_correlation: one label per image");
  const std::size_t per = images.size() / B;
  const std::size_t n = params.at(head).size();

  std::vector<std::size_t> probe(n);
  std::iota(probe.begin(), probe.end(), std::size_t{0});
  if (n > max_elements) {
    Rng rng(derive_seed(seed, "fisher-elements"));
    rng.shuffle(probe.begin(), probe.end());
    probe.resize(max_elements);
    std::sort(probe.begin(), probe.end());
  }

  FisherReport rep;
  rep.elements = probe.size();
  for (std::size_t b = 0; b < B; ++b) {
    const Tensor xb(nn::batch_input_shape(model, 1),
                    std::vector<double>(images.ptr() + b * per, images.ptr() + (b + 1) * per));
    const ad::Var x = ad::Var::leaf(xb);
    const auto lg = nn::loss_and_param_grads(model, nn::param_leaves(params), x,
                                             ad::Var::constant(ops::one_hot({labels[b]}, model.num_classes())), true);
    const ad::Var g = ad::reshape(lg.grads[head], {n});
    std::vector<double> magnitude, sensitivity;
    for (std::size_t i : probe) {
      const ad::Var gi = ad::sum(ad::slice(g, {i}, {i + 1}));
      magnitude.push_back(std::fabs(gi.item()));
      const Tensor dx = ad::grad(gi, {x}, {.retain_trace = false, .allow_unused = true})[0].value();
      double s = 0;
      for (double v : dx.data()) s += std::fabs(v);
      sensitivity.push_back(s);
    }
    rep.per_sample.push_back(pearson(magnitude, sensitivity));
  }
  const double m = std::accumulate(rep.per_sample.begin(), rep.per_sample.end(), 0.0) / static_cast<double>(B);
  double var = 0;
  for (double r : rep.per_sample) var += (r - m) * (r - m);
  rep.mean = m;
  rep.stdev = B > 1 ? std::sqrt(var / static_cast<double>(B - 1)) : 0.0;
  return rep;
}

UniquenessReport uniqueness_probe(const nn::Model& model, const nn::ParameterSet& params,
                                  const Tensor& x, const std::vector<int>& labels,
                                  std::size_t trials, double scale, std::uint64_t seed) {
  const Tensor base = nn::loss_and_param_grads(model, params, x, labels).grads.flatten();
  auto dist = [&](const Tensor& xp) {
    const Tensor g = nn::loss_and_param_grads(model, params, xp, labels).grads.flatten();
    return gradient_distance(g.data(), base.data(), GdMetric::L2);
  };
  UniquenessReport rep;
  rep.trials = trials;
  rep.sanity_distance = dist(x);
  rep.min_distance = std::numeric_limits<double>::infinity();
  Rng rng(derive_seed(seed, "uniqueness"));
  for (std::size_t t = 0; t < trials; ++t) {
    std::vector<double> v = x.to_vector();
    for (double& e : v) e += scale * rng.normal();
    const double d = dist(Tensor(x.shape(), std::move(v)));
    rep.min_distance = std::min(rep.min_distance, d);
    if (d < 1e-10) ++rep.collisions;
  }
  return rep;
}

MinRemovalVerdict min_removal_check(const std::vector<double>& values) {
  if (values.size() < 2) throw std::invalid_argument("min_removal_check needs at least two values");
  const double n = static_cast<double>(values.size());
  const auto it = std::min_element(values.begin(), values.end());
  MinRemovalVerdict v;
  double total = 0.0, rest = 0.0, excess = 0.0;
  for (auto p = values.begin(); p != values.end(); ++p) {
    total += *p;
    if (p == it) continue;
    rest += *p;
    excess += *p - *it;  // each term is exactly >= 0
  }
  v.old_mean = total / n;
  v.new_mean = rest / (n - 1);
  // new - old = excess / (n (n - 1)); decide on that form because the two
  // rounded means can tie or invert when the values are nearly equal.
  v.gap = excess / (n * (n - 1));
  v.strict_expected = std::any_of(values.begin(), values.end(), [&](double x) { return x > *it; });
  v.holds = v.strict_expected ? v.gap > 0 : v.gap >= 0;
  return v;
}

}  // namespace gleak::metrics
