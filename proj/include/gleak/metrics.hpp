#pragma once
// Reconstruction quality metrics and the analysis probes: curvature ratio
// estimates, Fisher/magnitude correlation, gradient uniqueness, and the
// min-removal mean property.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gleak/model.hpp"
#include "gleak/tensor.hpp"

namespace gleak::metrics {

inline constexpr double kPsnrCap = 100.0;

// 10 log10(1 / MSE), capped for identical images.
double psnr(const Tensor& a, const Tensor& b);

// Mean local SSIM over 8x8 uniform windows at stride 1, C1 = 0.01^2,
// C2 = 0.03^2, dynamic range 1. Images are [C,H,W] (or [H,W]); channels are
// scored separately and averaged. Images smaller than the window use one
// global window.
double ssim(const Tensor& a, const Tensor& b);

enum class GdMetric { L1, L2, Cosine };
// l1: mean |a - b|; l2: plain Euclidean norm; cosine: 1 - cos (1 for a zero
// vector).
double gradient_distance(std::span<const double> a, std::span<const double> b, GdMetric m);
// Root-mean-square difference, the mean-reduced companion of the l2 norm.
double gradient_rms(std::span<const double> a, std::span<const double> b);

// For each truth the index of the max-PSNR reconstruction, ties to the lower
// index. Exclusive mode assigns greedily by descending PSNR without reuse
// (falls back to reuse once reconstructions run out).
std::vector<std::size_t> match_reconstructions(const std::vector<Tensor>& recons,
                                               const std::vector<Tensor>& truths,
                                               bool exclusive = false);

struct MuL {
  double mu = 0.0;
  double L = 0.0;
  double ratio = 0.0;  // 2 mu / L
};

// mu = <x' - x, grad> / |x - x'|^2, L = |grad|^2 / |x - x'|^2. Throws
// DomainError when x' == x. ratio is 0 when grad is zero.
MuL mu_l_estimate(const Tensor& x_prime, const Tensor& x, const Tensor& grad);

// Throws DomainError when either series is constant.
double pearson(std::span<const double> a, std::span<const double> b);

struct FisherReport {
  std::vector<double> per_sample;
  double mean = 0.0;
  double stdev = 0.0;
  std::size_t elements = 0;  // head-gradient entries probed per sample
};

// Per sample: Pearson r between |g'[i]| and sum_j |d g'[i] / d x_j| over
// entries i of the head weight gradient. When the head has more than
// `max_elements` entries a seeded subset is probed.
FisherReport fisher_correlation(const nn::Model& model, const nn::ParameterSet& params,
                                const Tensor& images, const std::vector<int>& labels,
                                std::size_t max_elements = 256, std::uint64_t seed = 0);

struct UniquenessReport {
  std::size_t trials = 0;
  std::size_t collisions = 0;  // distance < 1e-10
  double min_distance = 0.0;
  double sanity_distance = 0.0;  // x' = x arm
};

// Samples x' = x + scale * N(0, 1) and compares full parameter gradients.
UniquenessReport uniqueness_probe(const nn::Model& model, const nn::ParameterSet& params,
                                  const Tensor& x, const std::vector<int>& labels,
                                  std::size_t trials, double scale, std::uint64_t seed);

struct MinRemovalVerdict {
  double old_mean = 0.0;
  double new_mean = 0.0;
  double gap = 0.0;  // new_mean - old_mean, computed without cancellation
  bool strict_expected = false;  // removed minimum was below the mean
  bool holds = false;
};

// Removes one minimum and checks new_mean >= old_mean (strict when expected).
// Needs at least two values.
MinRemovalVerdict min_removal_check(const std::vector<double>& values);

struct ImageScore {
  std::size_t truth = 0;
  std::size_t matched = 0;
  double psnr = 0.0;
  double ssim = 0.0;
};

struct MetricsReport {
  std::vector<ImageScore> images;
  double psnr_mean = 0.0, psnr_median = 0.0;
  double ssim_mean = 0.0, ssim_median = 0.0;
  std::optional<double> gradient_l2, gradient_rms;
};

// recons and truths are [B,C,H,W] batches.
MetricsReport evaluate(const Tensor& recons, const Tensor& truths, bool exclusive = false);

}  // namespace gleak::metrics
