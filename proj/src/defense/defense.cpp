#include "gleak/defense.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "gleak/rng.hpp"
#include "gleak/tensor_ops.hpp"
#include "gleak/topk.hpp"

namespace gleak::defense {

void DefenseConfig::validate() const {
  auto bad = [](const char* what) { throw std::invalid_argument(std::string("defense.") + what); };
  switch (kind) {
    case Kind::None:
      break;
    case Kind::GaussianDp:
      if (!(epsilon > 0)) bad("epsilon must be > 0");
      if (!(delta > 0 && delta < 1)) bad("delta must be in (0,1)");
      if (!(clip > 0)) bad("clip must be > 0");
      if (!(sigma_decay > 0 && sigma_decay <= 1)) bad("sigma_decay must be in (0,1]");
      break;
    case Kind::Sparsify:
      if (!(keep > 0 && keep <= 1)) bad("keep must be in (0,1]");
      break;
    case Kind::Quantize:
      if (bits < 1 || bits > 32) bad("bits must be in 1..32");
      break;
    case Kind::Expose:
      if (!(fraction > 0 && fraction <= 1)) bad("fraction must be in (0,1]");
      break;
  }
}

std::string kind_name(Kind k) {
  switch (k) {
    case Kind::None: return "none";
    case Kind::GaussianDp: return "gaussian-dp";
    case Kind::Sparsify: return "sparsify";
    case Kind::Quantize: return "quantize";
    case Kind::Expose: return "expose";
  }
  return "?";
}

Kind parse_kind(const std::string& s) {
  for (Kind k : {Kind::None, Kind::GaussianDp, Kind::Sparsify, Kind::Quantize, Kind::Expose}) {
    if (kind_name(k) == s) return k;
  }
  throw std::invalid_argument("unknown defense kind '" + s + "'");
}

double dp_sigma(double epsilon, double delta) {
  if (std::isinf(epsilon)) return 0.0;
  return std::sqrt(2.0 * std::log(1.0 / delta)) / epsilon;
}

Tensor dp_gaussian(const Tensor& g, double sigma, double clip, std::uint64_t seed) {
  const double norm = ops::l2norm(g);
  const double factor = norm > clip ? clip / norm : 1.0;
  std::vector<double> out = g.to_vector();
  if (factor != 1.0) {
    for (double& v : out) v *= factor;
  }
  if (sigma > 0) {
    Rng rng(seed);
    const double sd = sigma * clip;
    for (double& v : out) v += sd * rng.normal();
  }
  return Tensor(g.shape(), std::move(out));
}

namespace {

Tensor keep_indices(const Tensor& g, const std::vector<std::size_t>& keep, bool invert) {
  std::vector<double> out(g.size(), 0.0);
  std::vector<char> flag(g.size(), 0);
  for (std::size_t i : keep) flag[i] = 1;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (static_cast<bool>(flag[i]) != invert) out[i] = g[i];
  }
  return Tensor(g.shape(), std::move(out));
}

}  // namespace

Tensor sparsify_topk(const Tensor& g, double keep) {
  return keep_indices(g, top_magnitude(g.data(), count_for_fraction(keep, g.size())), false);
}

Tensor quantize(const Tensor& g, int bits) {
  std::vector<double> out(g.size(), 0.0);
  if (bits == 1) {
    double total = 0.0, lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    std::size_t nonzero = 0;
    for (double v : g.data()) {
      if (v != 0.0) {
        total += std::fabs(v);
        lo = std::min(lo, std::fabs(v));
        hi = std::max(hi, std::fabs(v));
        ++nonzero;
      }
    }
    // Already-quantized input keeps its level exactly.
    const double level = nonzero == 0 ? 0.0 : lo == hi ? hi : total / static_cast<double>(nonzero);
    for (std::size_t i = 0; i < g.size(); ++i) out[i] = g[i] > 0 ? level : g[i] < 0 ? -level : 0.0;
    return Tensor(g.shape(), std::move(out));
  }
  double m = 0.0;
  for (double v : g.data()) m = std::max(m, std::fabs(v));
  if (m == 0.0) return Tensor(g.shape(), std::move(out));
  // 2^b - 1 levels are k * m / h for k in [-h, h].
  const double h = std::ldexp(1.0, bits - 1) - 1.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double k = std::round(g[i] / m * h);
    out[i] = m * (k / h);
  }
  return Tensor(g.shape(), std::move(out));
}

Tensor expose_partition(const Tensor& g, Band band, double fraction) {
  if (band == Band::Top) return sparsify_topk(g, fraction);
  const auto top = top_magnitude(g.data(), count_for_fraction(1.0 - fraction, g.size()));
  return keep_indices(g, top, true);
}

nn::GradientVector apply(const DefenseConfig& cfg, const nn::GradientVector& g, std::uint64_t seed,
                         double sigma_scale) {
  switch (cfg.kind) {
    case Kind::None:
      return g;
    case Kind::Quantize: {
      std::vector<Tensor> parts;
      for (const Tensor& t : g.tensors()) parts.push_back(quantize(t, cfg.bits));
      return nn::GradientVector(g.layout(), std::move(parts));
    }
    case Kind::GaussianDp: {
      const double sigma = dp_sigma(cfg.epsilon, cfg.delta) * sigma_scale;
      return nn::GradientVector::unflatten(g.layout(), dp_gaussian(g.flatten(), sigma, cfg.clip, seed));
    }
    case Kind::Sparsify:
      return nn::GradientVector::unflatten(g.layout(), sparsify_topk(g.flatten(), cfg.keep));
    case Kind::Expose:
      return nn::GradientVector::unflatten(g.layout(),
                                           expose_partition(g.flatten(), cfg.band, cfg.fraction));
  }
  return g;
}

}  // namespace gleak::defense
