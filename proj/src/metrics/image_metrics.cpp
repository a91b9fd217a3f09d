#include <algorithm>
#include <cmath>
#include <numeric>
#include <tuple>

#include "gleak/metrics.hpp"

namespace gleak::metrics {

double psnr(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw ShapeError("psnr: shape mismatch");
  double se = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) se += (a[i] - b[i]) * (a[i] - b[i]);
  const double mse = se / static_cast<double>(a.size());
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, -10.0 * std::log10(mse));
}

namespace {

constexpr std::size_t kWindow = 8;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

// SSIM of one window given as (row0, col0, rows, cols) on a channel plane.
double window_ssim(const double* a, const double* b, std::size_t W, std::size_t r0, std::size_t c0,
                   std::size_t rows, std::size_t cols) {
  const double n = static_cast<double>(rows * cols);
  double sa = 0, sb = 0;
  for (std::size_t r = r0; r < r0 + rows; ++r)
    for (std::size_t c = c0; c < c0 + cols; ++c) {
      sa += a[r * W + c];
      sb += b[r * W + c];
    }
  const double ma = sa / n, mb = sb / n;
  double va = 0, vb = 0, cov = 0;
  for (std::size_t r = r0; r < r0 + rows; ++r)
    for (std::size_t c = c0; c < c0 + cols; ++c) {
      const double da = a[r * W + c] - ma, db = b[r * W + c] - mb;
      va += da * da;
      vb += db * db;
      cov += da * db;
    }
  va /= n;
  vb /= n;
  cov /= n;
  return ((2 * ma * mb + kC1) * (2 * cov + kC2)) / ((ma * ma + mb * mb + kC1) * (va + vb + kC2));
}

}  // namespace

double ssim(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw ShapeError("ssim: shape mismatch");
  if (a.rank() != 2 && a.rank() != 3) throw ShapeError("ssim expects [C,H,W] or [H,W]");
  const std::size_t C = a.rank() == 3 ? a.dim(0) : 1;
  const std::size_t H = a.dim(a.rank() - 2), W = a.dim(a.rank() - 1);
  double total = 0.0;
  for (std::size_t c = 0; c < C; ++c) {
    const double* pa = a.ptr() + c * H * W;
    const double* pb = b.ptr() + c * H * W;
    if (H < kWindow || W < kWindow) {
      total += window_ssim(pa, pb, W, 0, 0, H, W);
      continue;
    }
    double acc = 0.0;
    for (std::size_t r = 0; r + kWindow <= H; ++r)
      for (std::size_t q = 0; q + kWindow <= W; ++q) acc += window_ssim(pa, pb, W, r, q, kWindow, kWindow);
    total += acc / static_cast<double>((H - kWindow + 1) * (W - kWindow + 1));
  }
  return total / static_cast<double>(C);
}

double gradient_distance(std::span<const double> a, std::span<const double> b, GdMetric m) {
  if (a.size() != b.size()) throw ShapeError("gradient_distance: length mismatch");
  switch (m) {
    case GdMetric::L1: {
      double s = 0;
      for (std::size_t i = 0; i < a.size(); ++i) s += std::fabs(a[i] - b[i]);
      return a.empty() ? 0.0 : s / static_cast<double>(a.size());
    }
    case GdMetric::L2: {
      double s = 0;
      for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
      return std::sqrt(s);
    }
    case GdMetric::Cosine: {
      double d = 0, na = 0, nb = 0;
      for (std::size_t i = 0; i < a.size(); ++i) {
        d += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
      }
      if (na == 0 || nb == 0) return 1.0;
      return 1.0 - d / (std::sqrt(na) * std::sqrt(nb));
    }
  }
  return 0.0;
}

double gradient_rms(std::span<const double> a, std::span<const double> b) {
  if (a.empty()) return 0.0;
  return gradient_distance(a, b, GdMetric::L2) / std::sqrt(static_cast<double>(a.size()));
}

std::vector<std::size_t> match_reconstructions(const std::vector<Tensor>& recons,
                                               const std::vector<Tensor>& truths, bool exclusive) {
  if (recons.empty() || truths.empty()) throw std::invalid_argument("match_reconstructions: empty input");
  std::vector<std::vector<double>> score(truths.size(), std::vector<double>(recons.size()));
  for (std::size_t t = 0; t < truths.size(); ++t)
    for (std::size_t r = 0; r < recons.size(); ++r) score[t][r] = psnr(recons[r], truths[t]);

  auto best_of = [&](std::size_t t) {
    std::size_t best = 0;
    for (std::size_t r = 1; r < recons.size(); ++r)
      if (score[t][r] > score[t][best]) best = r;
    return best;
  };
  std::vector<std::size_t> out(truths.size());
  if (!exclusive) {
    for (std::size_t t = 0; t < truths.size(); ++t) out[t] = best_of(t);
    return out;
  }
  std::vector<std::tuple<double, std::size_t, std::size_t>> pairs;
  for (std::size_t t = 0; t < truths.size(); ++t)
    for (std::size_t r = 0; r < recons.size(); ++r) pairs.emplace_back(-score[t][r], t, r);
  std::sort(pairs.begin(), pairs.end());
  std::vector<bool> truth_done(truths.size(), false), recon_used(recons.size(), false);
  for (const auto& [neg, t, r] : pairs) {
    if (truth_done[t] || recon_used[r]) continue;
    out[t] = r;
    truth_done[t] = recon_used[r] = true;
  }
  for (std::size_t t = 0; t < truths.size(); ++t)
    if (!truth_done[t]) out[t] = best_of(t);
  return out;
}

namespace {

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::vector<Tensor> split_batch(const Tensor& t) {
  if (t.rank() < 2) throw ShapeError("expected a batch of images");
  const Shape per(t.shape().begin() + 1, t.shape().end());
  const std::size_t n = shape_numel(per);
  std::vector<Tensor> out;
  for (std::size_t b = 0; b < t.dim(0); ++b)
    out.emplace_back(per, std::vector<double>(t.ptr() + b * n, t.ptr() + (b + 1) * n));
  return out;
}

}  // namespace

MetricsReport evaluate(const Tensor& recons, const Tensor& truths, bool exclusive) {
  const auto rs = split_batch(recons), ts = split_batch(truths);
  const auto match = match_reconstructions(rs, ts, exclusive);
  MetricsReport rep;
  std::vector<double> ps, ss;
  for (std::size_t t = 0; t < ts.size(); ++t) {
    const ImageScore s{t, match[t], psnr(rs[match[t]], ts[t]), ssim(rs[match[t]], ts[t])};
    rep.images.push_back(s);
    ps.push_back(s.psnr);
    ss.push_back(s.ssim);
  }
  rep.psnr_mean = std::accumulate(ps.begin(), ps.end(), 0.0) / static_cast<double>(ps.size());
  rep.ssim_mean = std::accumulate(ss.begin(), ss.end(), 0.0) / static_cast<double>(ss.size());
  rep.psnr_median = median(ps);
  rep.ssim_median = median(ss);
  return rep;
}

}  // namespace gleak::metrics
