#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "gleak/attack.hpp"
#include "gleak/metrics.hpp"
#include "gleak/rng.hpp"
#include "gleak/tensor_ops.hpp"

namespace gleak::attack {

Tensor regularized_direction(const Tensor& x, double lambda, double k, Probe probe,
                             const GradientFn& grad_at, const Tensor* d1_known) {
  const Tensor d1 = d1_known ? *d1_known : grad_at(x);
  const double n = ops::l2norm(d1);
  if (lambda == 0.0 || n == 0.0) return d1;
  const double step = (probe == Probe::Ascent ? k : -k) / n;
  const Tensor d2 = grad_at(ops::add(x, ops::scale(d1, step)));
  std::vector<double> out(d1.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (1.0 - lambda) * d1[i] + lambda * d2[i];
  return Tensor(d1.shape(), std::move(out));
}

Adam::Adam(std::size_t n, double beta1, double beta2, double eps)
    : b1_(beta1), b2_(beta2), eps_(eps), m_(n, 0.0), v_(n, 0.0) {}

std::vector<double> Adam::step(std::span<const double> x, std::span<const double> d, double lr) {
  if (x.size() != m_.size() || d.size() != m_.size()) throw ShapeError("Adam: size mismatch");
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    m_[i] = b1_ * m_[i] + (1.0 - b1_) * d[i];
    v_[i] = b2_ * v_[i] + (1.0 - b2_) * d[i] * d[i];
    out[i] = x[i] - lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
  }
  return out;
}

double scheduled_eta(const AttackConfig& cfg, std::size_t it) {
  if (cfg.schedule == Schedule::Constant) return cfg.eta;
  const double phase = static_cast<double>(it % cfg.period) / static_cast<double>(cfg.period);
  return cfg.eta * 0.5 * (1.0 + std::cos(std::numbers::pi * phase));
}

Tensor project_rows_to_simplex(const Tensor& t) {
  if (t.rank() != 2) throw ShapeError("simplex projection expects [B,N]");
  const std::size_t B = t.dim(0), N = t.dim(1);
  std::vector<double> out(t.size());
  for (std::size_t b = 0; b < B; ++b) {
    std::vector<double> u(t.ptr() + b * N, t.ptr() + (b + 1) * N);
    std::sort(u.begin(), u.end(), std::greater<>());
    double cum = 0.0, theta = 0.0;
    for (std::size_t j = 0; j < N; ++j) {
      cum += u[j];
      const double cand = (cum - 1.0) / static_cast<double>(j + 1);
      if (u[j] - cand > 0) theta = cand;
    }
    for (std::size_t j = 0; j < N; ++j) out[b * N + j] = std::max(0.0, t[b * N + j] - theta);
  }
  return Tensor(t.shape(), std::move(out));
}

namespace {

Tensor clamp01(std::vector<double> v, const Shape& shape) {
  for (double& e : v) e = std::clamp(e, 0.0, 1.0);
  return Tensor(shape, std::move(v));
}

struct RestartResult {
  std::vector<TraceRow> rows;
  Tensor x, probs;
  double final_distance = std::numeric_limits<double>::quiet_NaN();
  bool aborted = false;
  std::string diagnostic;
};

RestartResult run_restart(const AttackInputs& in, const AttackConfig& cfg, const Objective& obj,
                          std::size_t restart) {
  const Shape& shape = in.image_shape;
  const std::size_t B = shape[0], N = in.model->num_classes();
  Rng rng(cfg.seed + restart);

  RestartResult r;
  if (in.initial) {
    if (in.initial->shape() != shape) throw ShapeError("initial image does not match the batch shape");
    r.x = clamp01(in.initial->to_vector(), shape);
  } else {
    std::vector<double> v(shape_numel(shape));
    for (double& e : v) e = rng.uniform();
    r.x = Tensor(shape, std::move(v));
  }
  r.probs = in.labels.empty() ? Tensor::full({B, N}, 1.0 / static_cast<double>(N)) : ops::one_hot(in.labels, N);

  Adam adam_x(r.x.size());
  Adam adam_t(r.probs.size());
  const bool refine = cfg.refine_labels;

  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    const auto e = obj.evaluate(r.x, r.probs, Tensor(Shape{0}), refine);
    if (!std::isfinite(e.value) || !e.grad_x.all_finite()) {
      r.aborted = true;
      r.diagnostic = "restart " + std::to_string(restart) + ": non-finite distance at iteration " +
                     std::to_string(it);
      return r;
    }
    Tensor direction = e.grad_x;
    if (cfg.method == Method::FedLeak) {
      const Tensor& mask = e.mask;
      auto grad_at = [&](const Tensor& x) { return obj.evaluate(x, r.probs, mask, false).grad_x; };
      direction = regularized_direction(r.x, cfg.lambda, cfg.k, cfg.probe, grad_at, &e.grad_x);
    }

    TraceRow row{it, e.value, e.selected, ops::l2norm(direction), {}, {}, {}, e.cosine_degenerate};
    if (in.ground_truth && !(*in.ground_truth == r.x)) {
      const auto ml = metrics::mu_l_estimate(r.x, *in.ground_truth, direction);
      row.mu = ml.mu;
      row.L = ml.L;
      row.two_mu_over_L = ml.ratio;
    }
    r.rows.push_back(row);

    const double eta = scheduled_eta(cfg, it);
    r.x = clamp01(adam_x.step(r.x.data(), direction.data(), eta), shape);
    if (refine) {
      r.probs = project_rows_to_simplex(
          Tensor(r.probs.shape(), adam_t.step(r.probs.data(), e.grad_targets.data(), eta)));
    }
  }
  r.final_distance = obj.evaluate(r.x, r.probs, Tensor(Shape{0}), false).value;
  if (!std::isfinite(r.final_distance)) {
    r.aborted = true;
    r.diagnostic = "restart " + std::to_string(restart) + ": non-finite final distance";
  }
  return r;
}

}  // namespace

ReconTrace run_attack(const AttackInputs& in, const AttackConfig& cfg) {
  cfg.validate();
  if (!in.model || !in.params || !in.g_hat) throw std::invalid_argument("attack inputs incomplete");
  if (in.image_shape.size() != 4) throw ShapeError("image shape must be [B,C,H,W]");
  const std::size_t B = in.image_shape[0];
  if (shape_numel(in.image_shape) != B * in.model->input_numel()) {
    throw ShapeError("image shape " + shape_str(in.image_shape) + " does not fit the model input");
  }
  if (in.labels.empty() && !cfg.refine_labels) throw std::invalid_argument("attack needs labels or refine_labels");
  if (!in.labels.empty() && in.labels.size() != B) throw std::invalid_argument("one label per image required");

  const Objective obj(*in.model, *in.params, *in.g_hat, cfg, in.observed ? *in.observed : Tensor(Shape{0}));
  ReconTrace best;
  bool have = false;
  for (std::size_t r = 0; r < cfg.restarts; ++r) {
    auto res = run_restart(in, cfg, obj, r);
    best.restart_distances.push_back(res.aborted ? std::numeric_limits<double>::quiet_NaN() : res.final_distance);
    if (res.aborted) {
      best.diagnostics.push_back(res.diagnostic);
      continue;
    }
    if (!have || res.final_distance < best.final_distance) {
      have = true;
      best.rows = std::move(res.rows);
      best.x = std::move(res.x);
      best.label_probs = std::move(res.probs);
      best.final_distance = res.final_distance;
      best.restart = r;
    }
  }
  if (!have) throw std::runtime_error("every restart aborted: " + best.diagnostics.front());
  return best;
}

void write_trace_csv(const std::filesystem::path& path, const ReconTrace& trace) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "iteration,distance,grad_norm,mu,L,two_mu_over_L\r\n";
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return std::string(buf);
  };
  for (const auto& r : trace.rows) {
    out << r.iteration << ',' << num(r.distance) << ',' << num(r.grad_norm) << ','
        << (r.mu ? num(*r.mu) : "") << ',' << (r.L ? num(*r.L) : "") << ','
        << (r.two_mu_over_L ? num(*r.two_mu_over_L) : "") << "\r\n";
  }
}

}  // namespace gleak::attack
