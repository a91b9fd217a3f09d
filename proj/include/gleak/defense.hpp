#pragma once
// Perturbations a client applies to what it shares: Gaussian noise with
// clipping, top-k sparsification, b-bit quantization, and magnitude-band
// exposure (keep only the largest or smallest elements).

#include <cstdint>
#include <string>

#include "gleak/model.hpp"
#include "gleak/tensor.hpp"

namespace gleak::defense {

enum class Kind { None, GaussianDp, Sparsify, Quantize, Expose };
enum class Band { Top, Bottom };
// Where Gaussian noise is attached during local training.
enum class Attach { PerStep, PerRound };

struct DefenseConfig {
  Kind kind = Kind::None;
  double epsilon = 100.0;
  double delta = 1e-5;
  double clip = 1.0;
  double keep = 1.0;      // sparsify keep ratio
  int bits = 32;          // quantize
  Band band = Band::Top;  // expose
  double fraction = 1.0;  // expose
  Attach attach = Attach::PerStep;
  double sigma_decay = 1.0;  // per-round multiplier on sigma (adaptive DP); 1 = fixed
  std::uint64_t seed = 0;

  // Throws std::invalid_argument naming the offending field.
  void validate() const;
  friend bool operator==(const DefenseConfig&, const DefenseConfig&) = default;
};

std::string kind_name(Kind k);
Kind parse_kind(const std::string& s);

// sqrt(2 ln(1/delta)) / epsilon; 0 for an infinite epsilon.
double dp_sigma(double epsilon, double delta);

// Clip to L2 norm <= clip, then add N(0, (sigma*clip)^2) per element.
Tensor dp_gaussian(const Tensor& g, double sigma, double clip, std::uint64_t seed);
Tensor sparsify_topk(const Tensor& g, double keep);
// Symmetric uniform quantizer with 2^bits - 1 levels over [-max|g|, max|g|].
// bits == 1 maps each element to sign(g) * mean of the nonzero |g|.
Tensor quantize(const Tensor& g, int bits);
// Top keeps the ceil(f n) largest magnitudes; Bottom(f) keeps exactly the
// complement of Top(1 - f).
Tensor expose_partition(const Tensor& g, Band band, double fraction);

// Applies a non-DP defense to every tensor of `g` (quantization is per
// tensor; sparsify and expose rank over the whole flattened vector). For
// GaussianDp the whole vector is clipped and noised with `sigma_scale`
// multiplying the configured sigma.
nn::GradientVector apply(const DefenseConfig& cfg, const nn::GradientVector& g, std::uint64_t seed,
                         double sigma_scale = 1.0);

}  // namespace gleak::defense
