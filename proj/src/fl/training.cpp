#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "gleak/fl.hpp"
#include "gleak/rng.hpp"
#include "gleak/tensor_ops.hpp"

namespace gleak::fl {
namespace {

// w - c * g, tensor by tensor.
nn::ParameterSet step(const nn::ParameterSet& w, const nn::GradientVector& g, double c) {
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < w.size(); ++i) out.push_back(ops::sub(w.at(i), ops::scale(g.at(i), c)));
  return {w.layout(), std::move(out)};
}

}  // namespace

LocalTrainResult local_train(const nn::Model& model, const nn::ParameterSet& params,
                             const data::Dataset& dataset, const std::vector<std::size_t>& client,
                             const LocalTrainConfig& cfg, std::uint64_t seed) {
  if (client.empty()) throw std::invalid_argument("local_train: client has no data");
  if (cfg.steps == 0) throw std::invalid_argument("local_train: steps must be >= 1");
  if (cfg.batch_size == 0 || cfg.batch_size > client.size()) {
    throw std::invalid_argument("local_train: batch size must be in [1, client size]");
  }
  const auto& def = cfg.defense;
  const bool dp_per_step = def.kind == defense::Kind::GaussianDp && def.attach == defense::Attach::PerStep;

  LocalTrainResult res{params, {}};
  std::vector<std::size_t> order;
  std::size_t cursor = 0, epoch = 0;
  for (std::size_t s = 0; s < cfg.steps; ++s) {
    if (order.empty() || cursor + cfg.batch_size > order.size()) {
      order = client;
      Rng rng(derive_seed(seed, "epoch", epoch++));
      rng.shuffle(order.begin(), order.end());
      cursor = 0;
    }
    std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(cursor),
                                   order.begin() + static_cast<std::ptrdiff_t>(cursor + cfg.batch_size));
    cursor += cfg.batch_size;

    const Tensor x = dataset.batch(batch).reshaped(nn::batch_input_shape(model, batch.size()));
    auto g = nn::loss_and_param_grads(model, res.params, x, dataset.batch_labels(batch)).grads;
    if (dp_per_step) g = defense::apply(def, g, derive_seed(seed, "dp-step", s), cfg.sigma_scale);
    res.params = step(res.params, g, cfg.lr);
    res.batches.push_back(std::move(batch));
  }

  if (def.kind != defense::Kind::None && !dp_per_step && cfg.lr > 0) {
    // Perturb the shared update, expressed as an average gradient so clip
    // thresholds keep their gradient-scale meaning.
    const double span = cfg.lr * static_cast<double>(cfg.steps);
    const auto g = estimate_gradient(params, res.params, cfg.lr, cfg.steps);
    res.params = step(params, defense::apply(def, g, derive_seed(seed, "defense"), cfg.sigma_scale), span);
  }
  return res;
}

nn::GradientVector estimate_gradient(const nn::ParameterSet& w_old, const nn::ParameterSet& w_new,
                                     double lr, std::size_t steps) {
  if (!(w_old.layout() == w_new.layout())) throw ShapeError("estimate_gradient: layout mismatch");
  if (!(lr > 0)) throw std::invalid_argument("estimate_gradient: lr must be > 0");
  if (steps == 0) throw std::invalid_argument("estimate_gradient: steps must be >= 1");
  const double den = lr * static_cast<double>(steps);
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < w_old.size(); ++i) {
    const Tensor& a = w_old.at(i);
    const Tensor& b = w_new.at(i);
    std::vector<double> v(a.size());
    for (std::size_t j = 0; j < v.size(); ++j) v[j] = (a[j] - b[j]) / den;
    out.emplace_back(a.shape(), std::move(v));
  }
  return {w_old.layout(), std::move(out)};
}

nn::ParameterSet aggregate(const std::vector<nn::ParameterSet>& sets) {
  if (sets.empty()) throw std::invalid_argument("aggregate: empty list");
  const auto& layout = sets.front().layout();
  std::vector<double> acc(layout.total, 0.0);
  double k = 0.0;
  for (const auto& s : sets) {
    if (!(s.layout() == layout)) throw ShapeError("aggregate: layout mismatch");
    const Tensor flat = s.flatten();
    k += 1.0;
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += (flat[i] - acc[i]) / k;
  }
  return nn::ParameterSet::unflatten(layout, Tensor({layout.total}, std::move(acc)));
}

RunResult run_rounds(const nn::Model& model, const nn::ParameterSet& init,
                     const data::Dataset& dataset, const FlConfig& cfg) {
  for (std::size_t r : cfg.attack_rounds) {
    if (r >= cfg.rounds) throw std::invalid_argument("attack round outside the simulated range");
  }
  RunResult out{{}, init, partition(dataset, cfg.partition)};
  const std::size_t K = out.partition.size();
  const std::set<std::size_t> attack(cfg.attack_rounds.begin(), cfg.attack_rounds.end());

  for (std::size_t t = 0; t < cfg.rounds; ++t) {
    std::vector<std::size_t> who(K);
    for (std::size_t k = 0; k < K; ++k) who[k] = k;
    if (cfg.participants > 0 && cfg.participants < K) {
      Rng rng(derive_seed(cfg.seed, "participants", t));
      rng.shuffle(who.begin(), who.end());
      who.resize(cfg.participants);
      std::sort(who.begin(), who.end());
    }
    LocalTrainConfig local = cfg.local;
    local.sigma_scale = std::pow(cfg.local.defense.sigma_decay, static_cast<double>(t));
    const bool logged = attack.count(t) > 0;
    RoundLog log{t, who, {}, {}, local.lr, local.steps, local.batch_size};

    std::vector<nn::ParameterSet> updates;
    const std::uint64_t round_seed = derive_seed(cfg.seed, "round", t);
    for (std::size_t k : who) {
      auto res = local_train(model, out.final_params, dataset, out.partition[k], local,
                             derive_seed(round_seed, "client", k));
      if (logged) {
        ClientRecord rec{k, out.final_params, res.params,
                         estimate_gradient(out.final_params, res.params, local.lr, local.steps), {}};
        std::set<std::size_t> seen;
        for (const auto& b : res.batches)
          for (std::size_t i : b)
            if (seen.insert(i).second) rec.truth_indices.push_back(i);
        log.clients.push_back(std::move(rec));
      }
      updates.push_back(std::move(res.params));
    }
    out.final_params = aggregate(updates);
    if (logged) {
      log.aggregated = out.final_params;
      out.logs.push_back(std::move(log));
    }
  }
  return out;
}

}  // namespace gleak::fl
