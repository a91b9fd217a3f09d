#include <cmath>
#include <stdexcept>

#include "gleak/attack.hpp"
#include "gleak/topk.hpp"

namespace gleak::attack {

using ad::Var;

std::string method_name(Method m) {
  switch (m) {
    case Method::FedLeak: return "fedleak";
    case Method::L2: return "l2";
    case Method::Cosine: return "cosine";
  }
  return "?";
}

Method parse_method(const std::string& s) {
  for (auto m : {Method::FedLeak, Method::L2, Method::Cosine})
    if (method_name(m) == s) return m;
  throw std::invalid_argument("unknown attack method '" + s + "'");
}

std::string schedule_name(Schedule s) {
  return s == Schedule::Constant ? "constant" : "cosine-annealing";
}

Schedule parse_schedule(const std::string& s) {
  if (s == "constant") return Schedule::Constant;
  if (s == "cosine-annealing") return Schedule::CosineAnnealing;
  throw std::invalid_argument("unknown schedule '" + s + "'");
}

std::string probe_name(Probe p) { return p == Probe::Ascent ? "ascent" : "descent"; }

Probe parse_probe(const std::string& s) {
  if (s == "ascent") return Probe::Ascent;
  if (s == "descent") return Probe::Descent;
  throw std::invalid_argument("unknown probe direction '" + s + "'");
}

void AttackConfig::validate() const {
  auto bad = [](const char* what) { throw std::invalid_argument(std::string("attack.") + what); };
  if (!(eta > 0)) bad("eta must be > 0");
  if (!(lambda >= 0 && lambda <= 1)) bad("lambda must be in [0,1]");
  if (!(k > 0)) bad("k must be > 0");
  if (!(R > 0 && R <= 100)) bad("R must be in (0,100]");
  if (!(alpha >= 0)) bad("alpha must be >= 0");
  if (!(beta >= 0)) bad("beta must be >= 0");
  if (restarts == 0) bad("restarts must be >= 1");
  if (schedule == Schedule::CosineAnnealing && period == 0) bad("period must be >= 1");
}

std::vector<std::size_t> select_indices(std::span<const double> g, double R) {
  return top_magnitude(g, count_for_fraction(R / 100.0, g.size()));
}

Var total_variation(const Var& x) {
  if (x.value().rank() != 4) throw ShapeError("total_variation expects [B,C,H,W]");
  const Shape& s = x.shape();
  const std::size_t B = s[0], C = s[1], H = s[2], W = s[3];
  Var tv = Var::constant(Tensor::scalar(0.0));
  if (H >= 2) {
    const Var d = ad::slice(x, {0, 0, 1, 0}, {B, C, H, W}) - ad::slice(x, {0, 0, 0, 0}, {B, C, H - 1, W});
    tv = tv + ad::sum(ad::abs(d));
  }
  if (W >= 2) {
    const Var d = ad::slice(x, {0, 0, 0, 1}, {B, C, H, W}) - ad::slice(x, {0, 0, 0, 0}, {B, C, H, W - 1});
    tv = tv + ad::sum(ad::abs(d));
  }
  return ad::scale(tv, 1.0 / static_cast<double>(B));
}

Var activation_penalty(const std::vector<Var>& activations) {
  Var total = Var::constant(Tensor::scalar(0.0));
  for (const Var& a : activations) total = total + ad::mean(ad::abs(a));
  return total;
}

DistanceTerms distance(const Var& g_prime, const Tensor& g_hat, const Tensor& mask, const Var& x,
                       const std::vector<Var>& activations, double alpha, double beta) {
  if (g_prime.size() != g_hat.size() || mask.size() != g_hat.size()) {
    throw ShapeError("distance: gradient and mask lengths differ");
  }
  const double selected = ops::sum(mask);
  if (!(selected > 0)) throw std::invalid_argument("distance: empty index set");
  DistanceTerms t;
  const Var m = Var::constant(mask);
  const Var gm = g_prime * m;
  t.l1 = ad::scale(ad::sum(ad::abs(gm - Var::constant(ops::mul(g_hat, mask)))), 1.0 / selected);

  const Tensor hat_m = ops::mul(g_hat, mask);
  const double n_hat = ops::l2norm(hat_m);
  const double n_prime = ops::l2norm(gm.value());
  if (n_hat == 0.0 || n_prime == 0.0) {
    t.cosine = Var::constant(Tensor::scalar(1.0));
    t.cosine_degenerate = true;
  } else {
    const Var cos = ad::sum(g_prime * Var::constant(hat_m)) / ad::scale(ad::l2norm(gm), n_hat);
    t.cosine = Var::constant(Tensor::scalar(1.0)) - cos;
  }
  t.tv = total_variation(x);
  t.activation = activation_penalty(activations);
  t.total = t.l1 + t.cosine + ad::scale(t.tv, alpha) + ad::scale(t.activation, beta);
  return t;
}

Objective::Objective(const nn::Model& model, const nn::ParameterSet& params,
                     const nn::GradientVector& g_hat, const AttackConfig& cfg, Tensor observed)
    : model_(model), params_(params), g_hat_(g_hat.flatten()), cfg_(cfg), observed_(std::move(observed)) {
  if (!(g_hat.layout() == model.layout())) throw ShapeError("observed gradient does not match the model");
  if (observed_.size() == 0) return;
  if (observed_.size() != g_hat_.size()) throw ShapeError("observed mask does not match the gradient");
  for (std::size_t i = 0; i < observed_.size(); ++i) {
    if (observed_[i] != 0.0 && observed_[i] != 1.0) throw std::invalid_argument("observed mask must be 0/1");
    if (observed_[i] == 1.0) observed_idx_.push_back(i);
  }
  if (observed_idx_.empty()) throw std::invalid_argument("observed mask selects no entries");
}

Objective::Eval Objective::evaluate(const Tensor& x, const Tensor& targets, const Tensor& mask,
                                    bool want_target_grad) const {
  const Var xv = Var::leaf(x);
  const Var tv = want_target_grad ? Var::leaf(targets) : Var::constant(targets);
  const std::size_t B = x.dim(0);
  const auto lg = nn::loss_and_param_grads(model_, nn::param_leaves(params_),
                                           ad::reshape(xv, nn::batch_input_shape(model_, B)), tv, true);
  std::vector<Var> parts;
  for (const Var& g : lg.grads) parts.push_back(ad::reshape(g, {g.size()}));
  const Var gflat = ad::concat(parts, 0);
  const Var hat = Var::constant(g_hat_);

  Eval e;
  Var D;
  switch (cfg_.method) {
    case Method::FedLeak: {
      if (mask.size()) {
        e.mask = mask;
      } else if (observed_idx_.empty()) {
        e.mask = Tensor({g_hat_.size()}, top_magnitude_mask(gflat.value().data(),
                                                            count_for_fraction(cfg_.R / 100.0, g_hat_.size())));
      } else {
        // Top R% of the received entries, ranked by |g'|.
        std::vector<double> sub(observed_idx_.size());
        for (std::size_t j = 0; j < sub.size(); ++j) sub[j] = gflat.value()[observed_idx_[j]];
        const auto pick = top_magnitude_mask(sub, count_for_fraction(cfg_.R / 100.0, sub.size()));
        std::vector<double> m(g_hat_.size(), 0.0);
        for (std::size_t j = 0; j < sub.size(); ++j) m[observed_idx_[j]] = pick[j];
        e.mask = Tensor({g_hat_.size()}, std::move(m));
      }
      const auto terms = distance(gflat, g_hat_, e.mask, xv, lg.activations, cfg_.alpha, cfg_.beta);
      D = terms.total;
      e.cosine_degenerate = terms.cosine_degenerate;
      break;
    }
    case Method::L2: {
      e.mask = observed_.size() ? observed_ : Tensor::full({g_hat_.size()}, 1.0);
      const Var d = observed_.size() ? (gflat - hat) * Var::constant(observed_) : gflat - hat;
      D = ad::sum(d * d);
      break;
    }
    case Method::Cosine: {
      e.mask = observed_.size() ? observed_ : Tensor::full({g_hat_.size()}, 1.0);
      const Var gm = observed_.size() ? gflat * Var::constant(observed_) : gflat;
      const Tensor hm = observed_.size() ? ops::mul(g_hat_, observed_) : g_hat_;
      const double n_hat = ops::l2norm(hm);
      const bool degenerate = n_hat == 0.0 || ops::l2norm(gm.value()) == 0.0;
      e.cosine_degenerate = degenerate;
      const Var cos_term = degenerate ? Var::constant(Tensor::scalar(1.0))
                                      : Var::constant(Tensor::scalar(1.0)) -
                                            ad::sum(gm * Var::constant(hm)) / ad::scale(ad::l2norm(gm), n_hat);
      D = cos_term + ad::scale(total_variation(xv), cfg_.alpha);
      break;
    }
  }
  e.selected = static_cast<std::size_t>(ops::sum(e.mask));
  e.value = D.item();
  std::vector<Var> wrt{xv};
  if (want_target_grad) wrt.push_back(tv);
  const auto g = ad::grad(D, wrt, {.retain_trace = false, .allow_unused = true});
  e.grad_x = g[0].value();
  if (want_target_grad) e.grad_targets = g[1].value();
  return e;
}

}  // namespace gleak::attack
