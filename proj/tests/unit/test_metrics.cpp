#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gleak/metrics.hpp"
#include "gleak/model.hpp"
#include "gleak/tensor_ops.hpp"
#include "test_support.hpp"

using namespace gleak;
using namespace gleak::metrics;
using gleak::testing::random_tensor;

TEST(Psnr, CapUniformOffsetAndLoopOracle) {
  Rng rng(1);
  const Tensor a = random_tensor(rng, {1, 5, 5}, 0, 1);
  EXPECT_EQ(psnr(a, a), 100.0);
  EXPECT_NEAR(psnr(Tensor::full({3, 4}, 0.75), Tensor::full({3, 4}, 0.25)), 6.020599913279624, 1e-12);
  for (int t = 0; t < 10; ++t) {
    const Tensor x = random_tensor(rng, {2, 3, 4}, 0, 1), y = random_tensor(rng, {2, 3, 4}, 0, 1);
    double se = 0;
    for (std::size_t i = 0; i < x.size(); ++i) se += (x[i] - y[i]) * (x[i] - y[i]);
    EXPECT_NEAR(psnr(x, y), 10 * std::log10(24 / se), 1e-10);
  }
  EXPECT_THROW(psnr(Tensor({2}), Tensor({3})), ShapeError);
}

TEST(Psnr, DecreasesWithNoiseAmplitude) {
  Rng rng(2);
  const Tensor base = Tensor::full({1, 8, 8}, 0.5);
  const Tensor noise = random_tensor(rng, {1, 8, 8});
  double prev = psnr(base, base);
  for (double amp : {0.01, 0.05, 0.1, 0.2, 0.4}) {
    const double p = psnr(ops::add(base, ops::scale(noise, amp)), base);
    EXPECT_LT(p, prev);
    prev = p;
  }
}

TEST(Ssim, IdentityConstantsAndSymmetry) {
  Rng rng(3);
  const Tensor a = random_tensor(rng, {2, 10, 12}, 0, 1), b = random_tensor(rng, {2, 10, 12}, 0, 1);
  EXPECT_NEAR(ssim(a, a), 1.0, 1e-12);
  EXPECT_EQ(ssim(a, b), ssim(b, a));
  EXPECT_GE(ssim(a, b), -1.0);
  EXPECT_LE(ssim(a, b), 1.0);
  // Constant 0 vs constant 1: C1 / (1 + C1).
  const double c1 = 1e-4;
  EXPECT_NEAR(ssim(Tensor({9, 9}), Tensor::full({9, 9}, 1.0)), c1 / (1 + c1), 1e-15);
  EXPECT_LT(ssim(Tensor({9, 9}), Tensor::full({9, 9}, 1.0)), 0.01);
}

TEST(Ssim, SmallImageUsesOneGlobalWindow) {
  Rng rng(4);
  const Tensor a = random_tensor(rng, {4, 5}, 0, 1), b = random_tensor(rng, {4, 5}, 0, 1);
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < 20; ++i) {
    ma += a[i] / 20;
    mb += b[i] / 20;
  }
  double va = 0, vb = 0, cv = 0;
  for (std::size_t i = 0; i < 20; ++i) {
    va += (a[i] - ma) * (a[i] - ma) / 20;
    vb += (b[i] - mb) * (b[i] - mb) / 20;
    cv += (a[i] - ma) * (b[i] - mb) / 20;
  }
  const double c1 = 1e-4, c2 = 9e-4;
  const double want = (2 * ma * mb + c1) * (2 * cv + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
  EXPECT_NEAR(ssim(a, b), want, 1e-12);
}

TEST(GradientDistance, Examples) {
  const std::vector<double> a{1, 0}, b{0, 1}, z{0, 0};
  EXPECT_NEAR(gradient_distance(a, b, GdMetric::L2), std::sqrt(2.0), 1e-15);
  EXPECT_EQ(gradient_distance(a, b, GdMetric::Cosine), 1.0);
  EXPECT_EQ(gradient_distance(a, b, GdMetric::L1), 1.0);
  EXPECT_EQ(gradient_distance(a, z, GdMetric::Cosine), 1.0);
  for (auto m : {GdMetric::L1, GdMetric::L2, GdMetric::Cosine}) EXPECT_NEAR(gradient_distance(a, a, m), 0.0, 1e-15);
  EXPECT_NEAR(gradient_rms(a, b), 1.0, 1e-15);
}

TEST(Matching, IdentityAndSingleReconstruction) {
  Rng rng(5);
  std::vector<Tensor> imgs;
  for (int i = 0; i < 4; ++i) imgs.push_back(random_tensor(rng, {1, 3, 3}, 0, 1));
  EXPECT_EQ(match_reconstructions(imgs, imgs), (std::vector<std::size_t>{0, 1, 2, 3}));
  EXPECT_EQ(match_reconstructions(imgs, imgs, true), (std::vector<std::size_t>{0, 1, 2, 3}));
  EXPECT_EQ(match_reconstructions({imgs[2]}, imgs), (std::vector<std::size_t>(4, 0)));
}

TEST(Matching, AgreesWithExhaustiveSearch) {
  Rng rng(6);
  for (int t = 0; t < 30; ++t) {
    const std::size_t nr = 1 + rng.below(8), nt = 1 + rng.below(8);
    std::vector<Tensor> recons, truths;
    for (std::size_t i = 0; i < nr; ++i) recons.push_back(random_tensor(rng, {1, 4, 4}, 0, 1));
    for (std::size_t i = 0; i < nt; ++i) truths.push_back(random_tensor(rng, {1, 4, 4}, 0, 1));
    const auto got = match_reconstructions(recons, truths);
    for (std::size_t j = 0; j < nt; ++j) {
      std::size_t best = 0;
      double best_mse = 1e300;
      for (std::size_t i = 0; i < nr; ++i) {
        double se = 0;
        for (std::size_t e = 0; e < 16; ++e) se += std::pow(recons[i][e] - truths[j][e], 2);
        if (se < best_mse) {
          best_mse = se;
          best = i;
        }
      }
      EXPECT_EQ(got[j], best);
    }
    // Exclusive mode never reuses while reconstructions remain.
    const auto ex = match_reconstructions(recons, truths, true);
    std::vector<std::size_t> used(ex.begin(), ex.begin() + static_cast<std::ptrdiff_t>(std::min(nr, nt)));
    if (nt <= nr) {
      std::sort(used.begin(), used.end());
      EXPECT_EQ(std::adjacent_find(used.begin(), used.end()), used.end());
    }
  }
}

TEST(Evaluate, ReportAggregates) {
  Rng rng(7);
  const Tensor t = random_tensor(rng, {3, 1, 8, 8}, 0, 1);
  const auto rep = evaluate(t, t);
  ASSERT_EQ(rep.images.size(), 3u);
  EXPECT_EQ(rep.psnr_mean, 100.0);
  EXPECT_EQ(rep.psnr_median, 100.0);
  EXPECT_NEAR(rep.ssim_mean, 1.0, 1e-12);
}

TEST(MuL, QuadraticAndOrthogonal) {
  const Tensor x = Tensor::from({0.2, 0.4, 0.6}), xp = Tensor::from({0.5, 0.1, 0.9});
  const auto q = mu_l_estimate(xp, x, ops::sub(xp, x));
  EXPECT_NEAR(q.mu, 1.0, 1e-14);
  EXPECT_NEAR(q.L, 1.0, 1e-14);
  EXPECT_NEAR(q.ratio, 2.0, 1e-14);
  // d = (0.3, -0.3, 0.3); (1, 1, 0) is orthogonal.
  EXPECT_NEAR(mu_l_estimate(xp, x, Tensor::from({1, 1, 0})).mu, 0.0, 1e-15);
  EXPECT_THROW(mu_l_estimate(x, x, x), DomainError);
}

TEST(MuL, StepBelowRatioConvergesAboveDiverges) {
  // D(x) = a x^2 / 2: mu = a, L = a^2, safe steps are eta < 2 / a.
  for (double a : {0.5, 1.0, 3.0, 10.0}) {
    const double ratio = mu_l_estimate(Tensor::from({1.0}), Tensor::from({0.0}), Tensor::from({a})).ratio;
    EXPECT_NEAR(ratio, 2 / a, 1e-15);
    for (double f : {1 - 1e-6, 1 + 1e-6}) {
      const double eta = ratio * f;
      double x = 1.0;
      for (int i = 0; i < 2000; ++i) x -= eta * a * x;
      if (f < 1)
        EXPECT_LT(std::fabs(x), 1.0) << a;
      else
        EXPECT_GT(std::fabs(x), 1.0) << a;
    }
  }
}

TEST(Pearson, LinearIndependentConstant) {
  std::vector<double> a(50), b(50);
  for (int i = 0; i < 50; ++i) {
    a[i] = i * 0.3 - 2;
    b[i] = 4 * a[i] + 1;
  }
  EXPECT_NEAR(pearson(a, b), 1.0, 1e-14);
  Rng rng(8);
  std::vector<double> u(1000), v(1000);
  for (int i = 0; i < 1000; ++i) {
    u[i] = rng.normal();
    v[i] = rng.normal();
  }
  EXPECT_LT(std::fabs(pearson(u, v)), 0.1);
  EXPECT_THROW(pearson(std::vector<double>(5, 1.0), std::vector<double>{1, 2, 3, 4, 5}), DomainError);
}

TEST(Fisher, MatchesFiniteDifferenceSensitivity) {
  const auto m = nn::make_model("mlp2", {4}, 3, 5);
  const auto p = nn::init_params(m, {}, 2);
  Rng rng(9);
  const Tensor x = random_tensor(rng, {1, 4}, 0, 1);
  const auto rep = fisher_correlation(m, p, x, {1}, 1000, 0);
  ASSERT_EQ(rep.per_sample.size(), 1u);
  EXPECT_EQ(rep.elements, 15u);

  // Independent series: head-gradient magnitude and its summed |d/dx| by
  // central differences.
  const std::size_t head = p.layout().index_of(m.head_weight_name());
  auto head_grad = [&](const Tensor& xx) { return nn::loss_and_param_grads(m, p, xx, {1}).grads.at(head); };
  const Tensor g0 = head_grad(x);
  std::vector<double> mag, sens(15, 0.0);
  for (double v : g0.data()) mag.push_back(std::fabs(v));
  for (std::size_t j = 0; j < 4; ++j) {
    auto xv = x.to_vector();
    xv[j] += 1e-6;
    const Tensor gp = head_grad(Tensor({1, 4}, xv));
    xv[j] -= 2e-6;
    const Tensor gm = head_grad(Tensor({1, 4}, xv));
    for (std::size_t i = 0; i < 15; ++i) sens[i] += std::fabs((gp[i] - gm[i]) / 2e-6);
  }
  EXPECT_NEAR(rep.per_sample[0], pearson(mag, sens), 1e-6);
}

TEST(Fisher, SubsamplesLargeHeads) {
  const auto m = nn::make_model("mlp2", {6}, 4, 40);
  const auto p = nn::init_params(m, {}, 3);
  Rng rng(10);
  const auto rep = fisher_correlation(m, p, random_tensor(rng, {2, 6}, 0, 1), {0, 3}, 32, 1);
  EXPECT_EQ(rep.elements, 32u);
  ASSERT_EQ(rep.per_sample.size(), 2u);
  for (double r : rep.per_sample) {
    EXPECT_GE(r, -1.0);
    EXPECT_LE(r, 1.0);
  }
}

TEST(Uniqueness, FcNetHasNoCollisionsDegenerateNetDoes) {
  const auto m = nn::make_model("mlp2", {8}, 4, 6);
  const auto p = nn::init_params(m, {}, 4);
  Rng rng(11);
  const Tensor x = random_tensor(rng, {1, 8}, 0, 1);
  const auto rep = uniqueness_probe(m, p, x, {2}, 200, 0.1, 1);
  EXPECT_EQ(rep.sanity_distance, 0.0);
  EXPECT_EQ(rep.collisions, 0u);
  EXPECT_GT(rep.min_distance, 1e-10);

  const auto zero = nn::ParameterSet::zeros(m.layout());
  const auto deg = uniqueness_probe(m, zero, x, {2}, 50, 0.1, 1);
  EXPECT_EQ(deg.collisions, 50u);
}

TEST(MinRemoval, ExamplesAndRandomMultisets) {
  const auto v = min_removal_check({1, 2, 3});
  EXPECT_EQ(v.old_mean, 2.0);
  EXPECT_EQ(v.new_mean, 2.5);
  EXPECT_TRUE(v.strict_expected);
  EXPECT_TRUE(v.holds);
  const auto eq = min_removal_check({5, 5, 5});
  EXPECT_EQ(eq.new_mean, eq.old_mean);
  EXPECT_FALSE(eq.strict_expected);
  EXPECT_TRUE(eq.holds);
  EXPECT_THROW(min_removal_check({1}), std::invalid_argument);

  Rng rng(12);
  for (int t = 0; t < 1000; ++t) {
    std::vector<double> vals(2 + rng.below(30));
    const bool coarse = rng.uniform() < 0.3;
    for (double& x : vals) x = coarse ? static_cast<double>(rng.below(3)) : rng.uniform(-1e3, 1e3);
    const auto r = min_removal_check(vals);
    EXPECT_TRUE(r.holds);
    const double mn = *std::min_element(vals.begin(), vals.end());
    EXPECT_EQ(r.strict_expected, std::any_of(vals.begin(), vals.end(), [&](double x) { return x > mn; }));
  }
}
