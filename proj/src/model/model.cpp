#include "gleak/model.hpp"

#include <cmath>
#include <set>
#include <stdexcept>

#include "gleak/rng.hpp"

namespace gleak::nn {

using ad::Var;

LayerSpec LayerSpec::fc(std::string name, std::size_t in, std::size_t out) {
  LayerSpec s;
  s.kind = Kind::FullyConnected;
  s.name = std::move(name);
  s.in = in;
  s.out = out;
  return s;
}

LayerSpec LayerSpec::conv(std::string name, std::size_t in, std::size_t out, std::size_t kernel,
                          std::size_t stride, std::size_t pad) {
  LayerSpec s;
  s.kind = Kind::Conv;
  s.name = std::move(name);
  s.in = in;
  s.out = out;
  s.kernel = kernel;
  s.stride = stride;
  s.pad = pad;
  return s;
}

LayerSpec LayerSpec::relu(std::string name) {
  LayerSpec s;
  s.kind = Kind::Relu;
  s.name = std::move(name);
  return s;
}

LayerSpec LayerSpec::avgpool(std::string name, std::size_t k) {
  LayerSpec s;
  s.kind = Kind::AvgPool;
  s.name = std::move(name);
  s.pool = k;
  return s;
}

LayerSpec LayerSpec::flatten(std::string name) {
  LayerSpec s;
  s.kind = Kind::Flatten;
  s.name = std::move(name);
  return s;
}

LayerSpec LayerSpec::residual(std::string name, std::size_t channels) {
  LayerSpec s;
  s.kind = Kind::ResidualBlock;
  s.name = std::move(name);
  s.channels = channels;
  return s;
}

LayerSpec LayerSpec::affine_norm(std::string name, std::size_t channels) {
  LayerSpec s;
  s.kind = Kind::AffineNorm;
  s.name = std::move(name);
  s.channels = channels;
  return s;
}

std::string kind_name(LayerSpec::Kind kind) {
  switch (kind) {
    case LayerSpec::Kind::FullyConnected: return "fc";
    case LayerSpec::Kind::Conv: return "conv";
    case LayerSpec::Kind::Relu: return "relu";
    case LayerSpec::Kind::AvgPool: return "avgpool";
    case LayerSpec::Kind::Flatten: return "flatten";
    case LayerSpec::Kind::ResidualBlock: return "residual-block";
    case LayerSpec::Kind::AffineNorm: return "affine-norm";
  }
  return "unknown";
}

// ---- layout ---------------------------------------------------------------------

ParamLayout ParamLayout::from_shapes(const std::vector<std::pair<std::string, Shape>>& shapes) {
  ParamLayout layout;
  for (const auto& [name, shape] : shapes) {
    const std::size_t n = shape_numel(shape);
    layout.entries.push_back({name, shape, layout.total, n});
    layout.total += n;
  }
  return layout;
}

std::size_t ParamLayout::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].name == name) return i;
  }
  throw std::out_of_range("no parameter named '" + name + "'");
}

bool operator==(const ParamLayout& a, const ParamLayout& b) {
  if (a.total != b.total || a.entries.size() != b.entries.size()) return false;
  for (std::size_t i = 0; i < a.entries.size(); ++i) {
    const auto& x = a.entries[i];
    const auto& y = b.entries[i];
    if (x.name != y.name || x.shape != y.shape || x.offset != y.offset) return false;
  }
  return true;
}

ParameterSet::ParameterSet(ParamLayout layout, std::vector<Tensor> tensors)
    : layout_(std::move(layout)), tensors_(std::move(tensors)) {
  if (tensors_.size() != layout_.entries.size()) {
    throw ShapeError("parameter set: " + std::to_string(tensors_.size()) + " tensors for " +
                     std::to_string(layout_.entries.size()) + " layout entries");
  }
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    if (tensors_[i].shape() != layout_.entries[i].shape) {
      throw ShapeError("parameter '" + layout_.entries[i].name + "' has shape " +
                       shape_str(tensors_[i].shape()) + ", expected " +
                       shape_str(layout_.entries[i].shape));
    }
  }
}

ParameterSet ParameterSet::unflatten(const ParamLayout& layout, const Tensor& flat) {
  if (flat.size() != layout.total) {
    throw ShapeError("unflatten: vector of length " + std::to_string(flat.size()) +
                     " for layout of " + std::to_string(layout.total));
  }
  std::vector<Tensor> tensors;
  tensors.reserve(layout.entries.size());
  const double* p = flat.ptr();
  for (const auto& e : layout.entries) {
    tensors.emplace_back(e.shape, std::vector<double>(p + e.offset, p + e.offset + e.length));
  }
  return ParameterSet(layout, std::move(tensors));
}

ParameterSet ParameterSet::zeros(const ParamLayout& layout) {
  return unflatten(layout, Tensor({layout.total}));
}

Tensor ParameterSet::flatten() const {
  std::vector<double> flat;
  flat.reserve(layout_.total);
  for (const Tensor& t : tensors_) flat.insert(flat.end(), t.data().begin(), t.data().end());
  return Tensor({layout_.total}, std::move(flat));
}

const Tensor& ParameterSet::get(const std::string& name) const {
  return tensors_.at(layout_.index_of(name));
}

// ---- build ----------------------------------------------------------------------

namespace {

std::string dims(const Shape& s) { return shape_str(s); }

void add_conv_params(std::vector<ParamInfo>& params, const std::string& prefix, std::size_t in,
                     std::size_t out, std::size_t k) {
  const std::size_t fan_in = in * k * k;
  params.push_back({prefix + ".weight", {out, in, k, k}, fan_in, ParamInfo::Role::Weight});
  params.push_back({prefix + ".bias", {out}, fan_in, ParamInfo::Role::Bias});
}

void add_norm_params(std::vector<ParamInfo>& params, const std::string& prefix, std::size_t c) {
  params.push_back({prefix + ".scale", {c, 1, 1}, 1, ParamInfo::Role::Scale});
  params.push_back({prefix + ".shift", {c, 1, 1}, 1, ParamInfo::Role::Shift});
}

Shape conv_out(const Shape& in, std::size_t out, std::size_t k, std::size_t stride,
               std::size_t pad, const std::string& name) {
  if (in.size() != 3) throw ShapeError(name + ": conv expects [C,H,W] input, got " + dims(in));
  if (in[1] + 2 * pad < k || in[2] + 2 * pad < k || stride == 0) {
    throw ShapeError(name + ": kernel does not fit input " + dims(in));
  }
  return {out, (in[1] + 2 * pad - k) / stride + 1, (in[2] + 2 * pad - k) / stride + 1};
}

}  // namespace

Model Model::build(Shape input_shape, std::vector<LayerSpec> specs) {
  if (specs.empty()) throw ShapeError("model: empty layer list");
  if (input_shape.empty() || shape_numel(input_shape) == 0) {
    throw ShapeError("model: input shape must be non-empty");
  }
  Model m;
  m.input_shape_ = input_shape;
  std::set<std::string> names;
  Shape cur = input_shape;
  for (const LayerSpec& s : specs) {
    if (s.name.empty() || !names.insert(s.name).second) {
      throw ShapeError("model: layer name '" + s.name + "' is empty or duplicated");
    }
    switch (s.kind) {
      case LayerSpec::Kind::FullyConnected:
        if (cur.size() != 1 || cur[0] != s.in) {
          throw ShapeError(s.name + ": fc(" + std::to_string(s.in) + "," + std::to_string(s.out) +
                           ") cannot consume " + dims(cur));
        }
        if (s.out == 0) throw ShapeError(s.name + ": fc output must be positive");
        m.params_.push_back({s.name + ".weight", {s.in, s.out}, s.in, ParamInfo::Role::Weight});
        m.params_.push_back({s.name + ".bias", {s.out}, s.in, ParamInfo::Role::Bias});
        m.head_weight_ = s.name + ".weight";
        cur = {s.out};
        break;
      case LayerSpec::Kind::Conv:
        if (cur.size() != 3 || cur[0] != s.in) {
          throw ShapeError(s.name + ": conv with " + std::to_string(s.in) +
                           " input channels cannot consume " + dims(cur));
        }
        add_conv_params(m.params_, s.name, s.in, s.out, s.kernel);
        cur = conv_out(cur, s.out, s.kernel, s.stride, s.pad, s.name);
        break;
      case LayerSpec::Kind::Relu:
        break;
      case LayerSpec::Kind::AvgPool:
        if (cur.size() != 3 || s.pool == 0 || cur[1] % s.pool != 0 || cur[2] % s.pool != 0) {
          throw ShapeError(s.name + ": avgpool(" + std::to_string(s.pool) + ") cannot consume " +
                           dims(cur));
        }
        cur = {cur[0], cur[1] / s.pool, cur[2] / s.pool};
        break;
      case LayerSpec::Kind::Flatten:
        cur = {shape_numel(cur)};
        break;
      case LayerSpec::Kind::ResidualBlock:
        if (cur.size() != 3 || cur[0] != s.channels) {
          throw ShapeError(s.name + ": residual block of " + std::to_string(s.channels) +
                           " channels cannot consume " + dims(cur));
        }
        add_conv_params(m.params_, s.name + ".conv1", s.channels, s.channels, 3);
        add_norm_params(m.params_, s.name + ".norm1", s.channels);
        add_conv_params(m.params_, s.name + ".conv2", s.channels, s.channels, 3);
        add_norm_params(m.params_, s.name + ".norm2", s.channels);
        break;
      case LayerSpec::Kind::AffineNorm:
        if (cur.size() != 3 || cur[0] != s.channels) {
          throw ShapeError(s.name + ": affine-norm of " + std::to_string(s.channels) +
                           " channels cannot consume " + dims(cur));
        }
        add_norm_params(m.params_, s.name, s.channels);
        break;
    }
  }
  if (cur.size() != 1 || specs.back().kind != LayerSpec::Kind::FullyConnected) {
    throw ShapeError("model: the last layer must be fully connected, output is " + dims(cur));
  }
  m.num_classes_ = cur[0];
  m.layers_ = std::move(specs);
  std::vector<std::pair<std::string, Shape>> shapes;
  for (const ParamInfo& p : m.params_) shapes.emplace_back(p.name, p.shape);
  m.layout_ = ParamLayout::from_shapes(shapes);
  return m;
}

// ---- init ---------------------------------------------------------------------------

ParameterSet init_params(const Model& model, const InitScheme& scheme, std::uint64_t seed) {
  if (scheme.kind == InitScheme::Kind::FromFile) {
    ParameterSet loaded = load_parameters(scheme.path);
    if (!(loaded.layout() == model.layout())) {
      throw ShapeError("parameter file " + scheme.path.string() +
                       " does not match the model's parameter shapes");
    }
    return loaded;
  }
  if (scheme.kind == InitScheme::Kind::WideUniform && !(scheme.low < scheme.high)) {
    throw std::invalid_argument("wide-uniform init needs low < high");
  }
  Rng rng(seed);
  std::vector<Tensor> tensors;
  for (const ParamInfo& p : model.params()) {
    std::vector<double> v(shape_numel(p.shape));
    if (scheme.kind == InitScheme::Kind::WideUniform) {
      for (double& x : v) x = rng.uniform(scheme.low, scheme.high);
    } else if (p.role == ParamInfo::Role::Scale) {
      std::fill(v.begin(), v.end(), 1.0);
    } else if (p.role == ParamInfo::Role::Shift) {
      std::fill(v.begin(), v.end(), 0.0);
    } else {
      const double bound = 1.0 / std::sqrt(static_cast<double>(p.fan_in));
      for (double& x : v) x = rng.uniform(-bound, bound);
    }
    tensors.emplace_back(p.shape, std::move(v));
  }
  return ParameterSet(model.layout(), std::move(tensors));
}

// ---- forward --------------------------------------------------------------------------

namespace {

Var conv_layer(const Var& x, const Var& w, const Var& b, std::size_t stride, std::size_t pad) {
  const Var y = ad::conv2d(x, w, {stride, pad});
  return ad::add(y, ad::reshape(b, {b.shape()[0], 1, 1}));
}

Var affine(const Var& x, const Var& scale, const Var& shift) {
  return ad::add(ad::mul(x, scale), shift);
}

}  // namespace

TracedForward forward(const Model& model, const std::vector<Var>& params, const Var& x) {
  if (params.size() != model.layout().entries.size()) {
    throw ShapeError("forward: " + std::to_string(params.size()) + " parameter tensors for " +
                     std::to_string(model.layout().entries.size()) + " expected");
  }
  const Shape& xs = x.shape();
  Shape expect{xs.empty() ? 0 : xs[0]};
  expect.insert(expect.end(), model.input_shape().begin(), model.input_shape().end());
  if (xs != expect || xs[0] == 0) {
    throw ShapeError("forward: input " + shape_str(xs) + " does not match [B," +
                     shape_str(model.input_shape()) + "]");
  }
  const std::size_t batch = xs[0];
  TracedForward out;
  Var h = x;
  std::size_t p = 0;
  for (const LayerSpec& s : model.layers()) {
    switch (s.kind) {
      case LayerSpec::Kind::FullyConnected:
        h = ad::add(ad::matmul(h, params[p]), params[p + 1]);
        p += 2;
        break;
      case LayerSpec::Kind::Conv:
        h = conv_layer(h, params[p], params[p + 1], s.stride, s.pad);
        p += 2;
        break;
      case LayerSpec::Kind::Relu:
        h = ad::relu(h);
        out.activations.push_back(h);
        break;
      case LayerSpec::Kind::AvgPool:
        h = ad::avgpool2d(h, s.pool);
        break;
      case LayerSpec::Kind::Flatten:
        h = ad::reshape(h, {batch, h.size() / batch});
        break;
      case LayerSpec::Kind::ResidualBlock: {
        Var r = conv_layer(h, params[p], params[p + 1], 1, 1);
        r = ad::relu(affine(r, params[p + 2], params[p + 3]));
        out.activations.push_back(r);
        r = conv_layer(r, params[p + 4], params[p + 5], 1, 1);
        r = affine(r, params[p + 6], params[p + 7]);
        h = ad::relu(ad::add(r, h));
        out.activations.push_back(h);
        p += 8;
        break;
      }
      case LayerSpec::Kind::AffineNorm:
        h = affine(h, params[p], params[p + 1]);
        p += 2;
        break;
    }
  }
  out.logits = h;
  return out;
}

Forward forward(const Model& model, const ParameterSet& params, const Tensor& x) {
  ad::NoGradGuard guard;
  std::vector<Var> pv;
  for (const Tensor& t : params.tensors()) pv.push_back(Var::constant(t));
  TracedForward f = forward(model, pv, Var::constant(x));
  Forward out{f.logits.value(), {}};
  for (const Var& a : f.activations) out.activations.push_back(a.value());
  return out;
}

std::vector<Var> param_leaves(const ParameterSet& params) {
  std::vector<Var> out;
  out.reserve(params.size());
  for (const Tensor& t : params.tensors()) out.push_back(Var::leaf(t));
  return out;
}

TracedLossGrads loss_and_param_grads(const Model& model, const std::vector<Var>& params,
                                     const Var& x, const Var& targets, bool retain_trace) {
  for (const Var& p : params) {
    if (!p.requires_grad()) throw ad::AutodiffError("loss_and_param_grads: parameters must be leaves");
  }
  TracedForward f = forward(model, params, x);
  TracedLossGrads out;
  out.loss = ad::softmax_cross_entropy(f.logits, targets);
  out.grads = ad::grad(out.loss, params, {retain_trace, true});
  out.activations = std::move(f.activations);
  return out;
}

LossGrads loss_and_param_grads(const Model& model, const ParameterSet& params, const Tensor& x,
                               const std::vector<int>& labels) {
  const Tensor targets = ops::one_hot(labels, model.num_classes());
  if (labels.size() != (x.rank() ? x.dim(0) : 0)) {
    throw ShapeError("loss_and_param_grads: " + std::to_string(labels.size()) +
                     " labels for batch " + shape_str(x.shape()));
  }
  const std::vector<Var> leaves = param_leaves(params);
  TracedLossGrads t =
      loss_and_param_grads(model, leaves, Var::constant(x), Var::constant(targets), false);
  std::vector<Tensor> g;
  g.reserve(t.grads.size());
  for (const Var& v : t.grads) g.push_back(v.value());
  return {t.loss.item(), ParameterSet(model.layout(), std::move(g))};
}

// ---- zoo ------------------------------------------------------------------------------

Model make_model(const std::string& name, const Shape& input_shape, std::size_t classes,
                 std::size_t hidden) {
  const std::size_t d = shape_numel(input_shape);
  std::vector<LayerSpec> s;
  const bool spatial = input_shape.size() == 3;
  if (name == "linear") {
    if (spatial) s.push_back(LayerSpec::flatten("flatten"));
    s.push_back(LayerSpec::fc("fc", d, classes));
  } else if (name == "mlp2") {
    const std::size_t h = hidden ? hidden : 64;
    if (spatial) s.push_back(LayerSpec::flatten("flatten"));
    s.push_back(LayerSpec::fc("fc1", d, h));
    s.push_back(LayerSpec::relu("relu1"));
    s.push_back(LayerSpec::fc("fc2", h, classes));
  } else if (name == "mlp3") {
    const std::size_t h = hidden ? hidden : 256;
    if (spatial) s.push_back(LayerSpec::flatten("flatten"));
    s.push_back(LayerSpec::fc("fc1", d, h));
    s.push_back(LayerSpec::relu("relu1"));
    s.push_back(LayerSpec::fc("fc2", h, h));
    s.push_back(LayerSpec::relu("relu2"));
    s.push_back(LayerSpec::fc("fc3", h, classes));
  } else if (name == "convnet") {
    if (!spatial) throw ShapeError("convnet needs a [C,H,W] input shape");
    const std::size_t c = input_shape[0];
    const std::size_t w = hidden ? hidden : 16;
    s.push_back(LayerSpec::conv("conv1", c, w, 3, 1, 1));
    s.push_back(LayerSpec::relu("relu1"));
    s.push_back(LayerSpec::avgpool("pool1", 2));
    s.push_back(LayerSpec::conv("conv2", w, w, 3, 1, 1));
    s.push_back(LayerSpec::relu("relu2"));
    s.push_back(LayerSpec::avgpool("pool2", 2));
    s.push_back(LayerSpec::conv("conv3", w, w, 3, 1, 1));
    s.push_back(LayerSpec::relu("relu3"));
    s.push_back(LayerSpec::flatten("flatten"));
    s.push_back(LayerSpec::fc("fc", w * (input_shape[1] / 4) * (input_shape[2] / 4), classes));
  } else if (name == "resnet-mini") {
    if (!spatial) throw ShapeError("resnet-mini needs a [C,H,W] input shape");
    const std::size_t w = hidden ? hidden : 8;
    s.push_back(LayerSpec::conv("stem", input_shape[0], w, 3, 1, 1));
    s.push_back(LayerSpec::affine_norm("stem_norm", w));
    s.push_back(LayerSpec::relu("stem_relu"));
    s.push_back(LayerSpec::residual("block1", w));
    s.push_back(LayerSpec::avgpool("pool1", 2));
    s.push_back(LayerSpec::residual("block2", w));
    s.push_back(LayerSpec::avgpool("pool2", 2));
    s.push_back(LayerSpec::flatten("flatten"));
    s.push_back(LayerSpec::fc("fc", w * (input_shape[1] / 4) * (input_shape[2] / 4), classes));
  } else {
    throw std::invalid_argument("unknown model '" + name + "'");
  }
  return Model::build(input_shape, std::move(s));
}

Shape batch_input_shape(const Model& model, std::size_t batch) {
  Shape s{batch};
  s.insert(s.end(), model.input_shape().begin(), model.input_shape().end());
  return s;
}

}  // namespace gleak::nn
