#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "gleak/finite_diff.hpp"
#include "gleak/model.hpp"
#include "test_support.hpp"

using namespace gleak;
using gleak::testing::max_rel_error;
using gleak::testing::random_tensor;
using nn::LayerSpec;

namespace {

// Straight-line y = relu(x W1 + b1) W2 + b2 with W stored [in,out].
std::vector<double> mlp_oracle(const std::vector<double>& x, std::size_t b, std::size_t in,
                               const nn::ParameterSet& p, std::size_t hid, std::size_t out) {
  const auto w1 = p.at(0).data(), b1 = p.at(1).data(), w2 = p.at(2).data(), b2 = p.at(3).data();
  std::vector<double> y(b * out);
  for (std::size_t r = 0; r < b; ++r) {
    std::vector<double> h(hid);
    for (std::size_t j = 0; j < hid; ++j) {
      double s = b1[j];
      for (std::size_t i = 0; i < in; ++i) s += x[r * in + i] * w1[i * hid + j];
      h[j] = s > 0 ? s : 0;
    }
    for (std::size_t k = 0; k < out; ++k) {
      double s = b2[k];
      for (std::size_t j = 0; j < hid; ++j) s += h[j] * w2[j * out + k];
      y[r * out + k] = s;
    }
  }
  return y;
}

}  // namespace

TEST(BuildModel, SingleFcCountsWeightsAndBias) {
  const auto m = nn::Model::build({4}, {LayerSpec::fc("fc", 4, 2)});
  EXPECT_EQ(m.num_parameters(), 10u);
  EXPECT_EQ(m.num_classes(), 2u);
  EXPECT_EQ(m.head_weight_name(), "fc.weight");
}

TEST(BuildModel, ConvNetPropagatesShapes) {
  const auto m = nn::make_model("convnet", {3, 16, 16}, 10);
  // three conv blocks, each conv weight [o, c, 3, 3]
  std::size_t convs = 0;
  for (const auto& p : m.params()) convs += p.shape.size() == 4;
  EXPECT_EQ(convs, 3u);
  EXPECT_EQ(m.layout().entries.back().shape, (Shape{10}));
  const auto f = nn::forward(m, nn::init_params(m, nn::InitScheme::default_random(), 1),
                             Tensor(Shape{2, 3, 16, 16}));
  EXPECT_EQ(f.logits.shape(), (Shape{2, 10}));
}

TEST(BuildModel, RejectsEmptyMismatchedAndDuplicate) {
  EXPECT_THROW(nn::Model::build({4}, {}), ShapeError);
  EXPECT_THROW(nn::Model::build({4}, {LayerSpec::fc("a", 5, 2)}), ShapeError);
  EXPECT_THROW(nn::Model::build({4}, {LayerSpec::fc("a", 4, 4), LayerSpec::fc("a", 4, 2)}),
               ShapeError);
  EXPECT_THROW(nn::Model::build({1, 8, 8}, {LayerSpec::conv("c", 2, 4, 3)}), ShapeError);
}

TEST(BuildModel, ZooModelsBuildAndLayoutIsContiguous) {
  for (const char* name : {"linear", "mlp2", "mlp3", "convnet", "resnet-mini"}) {
    const bool image = std::string(name) == "convnet" || std::string(name) == "resnet-mini";
    const auto m = nn::make_model(name, image ? Shape{1, 8, 8} : Shape{64}, 4);
    std::size_t at = 0;
    for (const auto& e : m.layout().entries) {
      EXPECT_EQ(e.offset, at) << name;
      at += e.length;
    }
    EXPECT_EQ(at, m.num_parameters()) << name;
    const auto p = nn::init_params(m, nn::InitScheme::default_random(), 3);
    EXPECT_EQ(nn::ParameterSet::unflatten(m.layout(), p.flatten()), p) << name;
  }
  EXPECT_THROW(nn::make_model("transformer", {4}, 2), std::invalid_argument);
}

TEST(InitParams, WideUniformStaysInRange) {
  const auto m = nn::make_model("mlp2", {20}, 5);
  const auto p = nn::init_params(m, nn::InitScheme::wide_uniform(-0.5, 0.5), 7);
  for (double v : p.flatten().data()) {
    EXPECT_GE(v, -0.5);
    EXPECT_LE(v, 0.5);
  }
}

TEST(InitParams, SameSeedSameParameters) {
  const auto m = nn::make_model("convnet", {1, 8, 8}, 3);
  EXPECT_EQ(nn::init_params(m, {}, 11), nn::init_params(m, {}, 11));
  EXPECT_NE(nn::init_params(m, {}, 11), nn::init_params(m, {}, 12));
}

TEST(InitParams, DefaultRandomStdevMatchesUniformFanIn) {
  const auto m = nn::Model::build({100}, {LayerSpec::fc("fc", 100, 100)});
  const Tensor w = nn::init_params(m, {}, 5).get("fc.weight");
  double mean = 0, sq = 0;
  for (double v : w.data()) mean += v;
  mean /= w.size();
  for (double v : w.data()) sq += (v - mean) * (v - mean);
  const double sd = std::sqrt(sq / (w.size() - 1));
  // U(-a, a) has stdev a / sqrt(3); a = 1/sqrt(100).
  const double expected = (1.0 / std::sqrt(100.0)) / std::sqrt(3.0);
  EXPECT_NEAR(expected, std::sqrt(1.0 / 300.0), 1e-15);
  EXPECT_NEAR(sd, expected, 0.2 * expected);
}

TEST(InitParams, FromFileRoundTripsAndChecksLayout) {
  const auto dir = std::filesystem::temp_directory_path();
  const auto m = nn::make_model("mlp2", {6}, 3, 4);
  const auto p = nn::init_params(m, {}, 9);
  const auto path = dir / "gleak_params_test.bin";
  nn::save_parameters(path, p);
  EXPECT_EQ(nn::init_params(m, nn::InitScheme::from_file(path), 0), p);
  const auto other = nn::make_model("mlp2", {6}, 3, 5);
  EXPECT_THROW(nn::init_params(other, nn::InitScheme::from_file(path), 0), ShapeError);
  std::filesystem::remove(path);
}

TEST(Forward, IdentityWeightsReturnInput) {
  const auto m = nn::Model::build({3}, {LayerSpec::fc("fc", 3, 3)});
  const nn::ParameterSet p(m.layout(), {Tensor({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1}), Tensor({3})});
  const Tensor x({2, 3}, {0.1, 0.2, 0.3, 0.4, 0.5, 0.6});
  EXPECT_EQ(nn::forward(m, p, x).logits, x);
}

TEST(Forward, ZeroWeightsGiveZeroLogitsAndActivations) {
  const auto m = nn::make_model("mlp3", {8}, 4, 6);
  const auto p = nn::ParameterSet::zeros(m.layout());
  Rng rng(1);
  const auto f = nn::forward(m, p, random_tensor(rng, {3, 8}, 0, 1));
  EXPECT_EQ(f.logits, Tensor({3, 4}));
  ASSERT_EQ(f.activations.size(), 2u);
  for (const auto& a : f.activations)
    for (double v : a.data()) EXPECT_EQ(v, 0.0);
}

TEST(Forward, MlpMatchesStraightLineOracle) {
  Rng rng(2);
  const auto m = nn::make_model("mlp2", {7}, 3, 5);
  const auto p = nn::init_params(m, nn::InitScheme::wide_uniform(-1, 1), 4);
  const Tensor x = random_tensor(rng, {4, 7});
  const auto want = mlp_oracle(x.to_vector(), 4, 7, p, 5, 3);
  const auto got = nn::forward(m, p, x).logits;
  for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-12);
}

TEST(Forward, IsPureAndRejectsWrongShape) {
  Rng rng(3);
  const auto m = nn::make_model("resnet-mini", {1, 8, 8}, 3);
  const auto p = nn::init_params(m, {}, 1);
  const Tensor x = random_tensor(rng, {2, 1, 8, 8}, 0, 1);
  const auto a = nn::forward(m, p, x), b = nn::forward(m, p, x);
  EXPECT_EQ(a.logits, b.logits);
  EXPECT_EQ(a.activations, b.activations);
  EXPECT_THROW(nn::forward(m, p, Tensor(Shape{2, 1, 7, 8})), ShapeError);
}

TEST(LossGrads, UniformLogitsGiveLogN) {
  const auto m = nn::Model::build({3}, {LayerSpec::fc("fc", 3, 5)});
  const auto r = nn::loss_and_param_grads(m, nn::ParameterSet::zeros(m.layout()),
                                          Tensor::full({2, 3}, 0.4), {1, 4});
  EXPECT_NEAR(r.loss, std::log(5.0), 1e-14);
  EXPECT_THROW(nn::loss_and_param_grads(m, nn::ParameterSet::zeros(m.layout()),
                                        Tensor::full({1, 3}, 0.4), {5}),
               std::out_of_range);
}

TEST(LossGrads, LinearLayerMatchesClosedForm) {
  Rng rng(4);
  const auto m = nn::Model::build({4}, {LayerSpec::fc("fc", 4, 3)});
  const auto p = nn::init_params(m, nn::InitScheme::wide_uniform(-1, 1), 2);
  const Tensor x = random_tensor(rng, {1, 4});
  const int y = 2;
  const auto r = nn::loss_and_param_grads(m, p, x, {y});
  std::vector<double> z(3);
  for (int k = 0; k < 3; ++k) {
    z[k] = p.get("fc.bias")[k];
    for (int i = 0; i < 4; ++i) z[k] += x[i] * p.get("fc.weight")[i * 3 + k];
  }
  const double zmax = *std::max_element(z.begin(), z.end());
  double den = 0;
  for (double v : z) den += std::exp(v - zmax);
  for (int i = 0; i < 4; ++i)
    for (int k = 0; k < 3; ++k) {
      const double delta = std::exp(z[k] - zmax) / den - (k == y ? 1.0 : 0.0);
      EXPECT_NEAR(r.grads.get("fc.weight")[i * 3 + k], delta * x[i], 1e-14);
    }
}

TEST(LossGrads, DuplicatedSampleGivesSameMeanGradient) {
  Rng rng(5);
  const auto m = nn::make_model("mlp2", {6}, 3, 4);
  const auto p = nn::init_params(m, {}, 3);
  const Tensor x = random_tensor(rng, {1, 6}, 0, 1);
  const Tensor xx = ops::concat({x, x}, 0);
  const auto one = nn::loss_and_param_grads(m, p, x, {1});
  const auto two = nn::loss_and_param_grads(m, p, xx, {1, 1});
  EXPECT_LT(gleak::testing::max_abs_diff(one.grads.flatten(), two.grads.flatten()), 1e-15);
}

TEST(LossGrads, EveryMlpParameterMatchesFiniteDifferences) {
  Rng rng(6);
  const auto m = nn::make_model("mlp2", {5}, 3, 4);
  const auto p = nn::init_params(m, nn::InitScheme::wide_uniform(-1, 1), 8);
  const Tensor x = random_tensor(rng, {3, 5}, 0, 1);
  const std::vector<int> y{0, 2, 1};
  const auto r = nn::loss_and_param_grads(m, p, x, y);
  const Tensor numeric = finite_difference_gradient(
      [&](const Tensor& flat) {
        return nn::loss_and_param_grads(m, nn::ParameterSet::unflatten(m.layout(), flat), x, y).loss;
      },
      p.flatten());
  EXPECT_LT(max_rel_error(r.grads.flatten(), numeric), 1e-4);
}

TEST(LossGrads, ResidualNetParametersMatchFiniteDifferences) {
  Rng rng(7);
  const auto m = nn::make_model("resnet-mini", {1, 4, 4}, 2);
  const auto p = nn::init_params(m, {}, 8);
  const Tensor x = random_tensor(rng, {1, 1, 4, 4}, 0, 1);
  const auto r = nn::loss_and_param_grads(m, p, x, {1});
  const Tensor numeric = finite_difference_gradient(
      [&](const Tensor& flat) {
        return nn::loss_and_param_grads(m, nn::ParameterSet::unflatten(m.layout(), flat), x, {1}).loss;
      },
      p.flatten());
  EXPECT_LT(max_rel_error(r.grads.flatten(), numeric), 1e-4);
}
