#pragma once
// Declarative networks, parameter sets, and the forward/loss passes shared by
// federated training and the reconstruction attacks.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "gleak/autodiff.hpp"
#include "gleak/tensor.hpp"

namespace gleak::nn {

struct LayerSpec {
  enum class Kind { FullyConnected, Conv, Relu, AvgPool, Flatten, ResidualBlock, AffineNorm };

  Kind kind = Kind::Relu;
  std::string name;
  std::size_t in = 0;       // fc input features / conv input channels
  std::size_t out = 0;      // fc output features / conv output channels
  std::size_t kernel = 3;   // conv kernel
  std::size_t stride = 1;
  std::size_t pad = 0;
  std::size_t pool = 2;     // avgpool window
  std::size_t channels = 0; // residual-block / affine-norm

  static LayerSpec fc(std::string name, std::size_t in, std::size_t out);
  static LayerSpec conv(std::string name, std::size_t in, std::size_t out, std::size_t kernel,
                        std::size_t stride = 1, std::size_t pad = 0);
  static LayerSpec relu(std::string name);
  static LayerSpec avgpool(std::string name, std::size_t k);
  static LayerSpec flatten(std::string name);
  static LayerSpec residual(std::string name, std::size_t channels);
  static LayerSpec affine_norm(std::string name, std::size_t channels);
};

std::string kind_name(LayerSpec::Kind kind);

struct ParamInfo {
  enum class Role { Weight, Bias, Scale, Shift };
  std::string name;
  Shape shape;
  std::size_t fan_in = 1;
  Role role = Role::Weight;
};

/// Where each named tensor lives inside the flattened parameter vector.
struct ParamLayout {
  struct Entry {
    std::string name;
    Shape shape;
    std::size_t offset = 0;
    std::size_t length = 0;
  };
  std::vector<Entry> entries;
  std::size_t total = 0;

  static ParamLayout from_shapes(const std::vector<std::pair<std::string, Shape>>& shapes);
  std::size_t index_of(const std::string& name) const;  // throws std::out_of_range
  friend bool operator==(const ParamLayout&, const ParamLayout&);
};

/// Named per-layer tensors in model order, with a canonical flattened view.
/// Gradients use the same type (GradientVector).
class ParameterSet {
 public:
  ParameterSet() = default;
  ParameterSet(ParamLayout layout, std::vector<Tensor> tensors);

  static ParameterSet unflatten(const ParamLayout& layout, const Tensor& flat);
  static ParameterSet zeros(const ParamLayout& layout);

  Tensor flatten() const;
  const ParamLayout& layout() const { return layout_; }
  const std::vector<Tensor>& tensors() const { return tensors_; }
  const Tensor& at(std::size_t i) const { return tensors_.at(i); }
  const Tensor& get(const std::string& name) const;
  std::size_t size() const { return tensors_.size(); }
  std::size_t numel() const { return layout_.total; }

  friend bool operator==(const ParameterSet& a, const ParameterSet& b) {
    return a.layout_ == b.layout_ && a.tensors_ == b.tensors_;
  }

 private:
  ParamLayout layout_;
  std::vector<Tensor> tensors_;
};

using GradientVector = ParameterSet;

class Model {
 public:
  /// Validates shapes layer by layer. `input_shape` is per sample, e.g.
  /// {1,28,28} or {784}. Throws ShapeError on any mismatch or an empty spec.
  static Model build(Shape input_shape, std::vector<LayerSpec> specs);

  const Shape& input_shape() const { return input_shape_; }
  const std::vector<LayerSpec>& layers() const { return layers_; }
  const std::vector<ParamInfo>& params() const { return params_; }
  const ParamLayout& layout() const { return layout_; }
  std::size_t num_parameters() const { return layout_.total; }
  std::size_t num_classes() const { return num_classes_; }
  // Parameter name of the last fully-connected weight ([features, classes]).
  const std::string& head_weight_name() const { return head_weight_; }
  std::size_t input_numel() const { return shape_numel(input_shape_); }

 private:
  Shape input_shape_;
  std::vector<LayerSpec> layers_;
  std::vector<ParamInfo> params_;
  ParamLayout layout_;
  std::size_t num_classes_ = 0;
  std::string head_weight_;
};

// ---- initialization -----------------------------------------------------------

struct InitScheme {
  enum class Kind { DefaultRandom, WideUniform, FromFile };
  Kind kind = Kind::DefaultRandom;
  double low = -0.5;
  double high = 0.5;
  std::filesystem::path path;

  static InitScheme default_random() { return {}; }
  static InitScheme wide_uniform(double a, double b) { return {Kind::WideUniform, a, b, {}}; }
  static InitScheme from_file(std::filesystem::path p) {
    return {Kind::FromFile, 0.0, 0.0, std::move(p)};
  }
};

/// default-random: weights and biases ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)),
/// affine-norm scale 1 / shift 0. wide-uniform: every parameter ~ U[low, high].
ParameterSet init_params(const Model& model, const InitScheme& scheme, std::uint64_t seed);

// Parameter file: u64 manifest length | JSON manifest | GLT1 records.
// Manifest offsets are relative to the first byte after the manifest.
void save_parameters(const std::filesystem::path& path, const ParameterSet& params);
ParameterSet load_parameters(const std::filesystem::path& path);

// ---- forward / loss ------------------------------------------------------------

struct TracedForward {
  ad::Var logits;                    // [B, classes]
  std::vector<ad::Var> activations;  // post-ReLU outputs in network order
};

/// `params` aligned with model.layout(); x is [B, input_shape...].
TracedForward forward(const Model& model, const std::vector<ad::Var>& params, const ad::Var& x);

struct Forward {
  Tensor logits;
  std::vector<Tensor> activations;  // ActivationRecord
};

Forward forward(const Model& model, const ParameterSet& params, const Tensor& x);

std::vector<ad::Var> param_leaves(const ParameterSet& params);

// [batch, input_shape...], for reshaping image batches to the model input.
Shape batch_input_shape(const Model& model, std::size_t batch);

struct TracedLossGrads {
  ad::Var loss;
  std::vector<ad::Var> grads;  // aligned with the parameter layout
  std::vector<ad::Var> activations;
};

/// Mean cross-entropy and its parameter gradients. With retain_trace the
/// gradients stay differentiable with respect to x and targets.
TracedLossGrads loss_and_param_grads(const Model& model, const std::vector<ad::Var>& params,
                                     const ad::Var& x, const ad::Var& targets, bool retain_trace);

struct LossGrads {
  double loss = 0.0;
  GradientVector grads;
};

LossGrads loss_and_param_grads(const Model& model, const ParameterSet& params, const Tensor& x,
                               const std::vector<int>& labels);

// ---- zoo ------------------------------------------------------------------------

/// Named desk-scale architectures: "mlp2", "mlp3", "convnet", "resnet-mini",
/// "linear". `hidden` sets the fc width for the MLPs (0 = architecture default).
Model make_model(const std::string& name, const Shape& input_shape, std::size_t classes,
                 std::size_t hidden = 0);

}  // namespace gleak::nn
