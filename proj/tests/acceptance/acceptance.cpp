// Acceptance runner: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Usage: acceptance [--out DIR] [criterion numbers...]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "gleak/attack.hpp"
#include "gleak/digest.hpp"
#include "gleak/experiment.hpp"
#include "gleak/labels.hpp"
#include "gleak/metrics.hpp"
#include "gleak/tensor_ops.hpp"
#include "support/gradcheck.hpp"

namespace {

using namespace gleak;
namespace fs = std::filesystem;
using nlohmann::json;

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double median(std::vector<double> v) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double mean(const std::vector<double>& v) {
  return v.empty() ? std::nan("") : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Average ranks, so ties share a rank.
std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = 0.5 * static_cast<double>(i + j) + 1.0;
    i = j + 1;
  }
  return r;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  const auto ra = ranks(a), rb = ranks(b);
  const double ma = mean(ra), mb = mean(rb);
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  // A flat PSNR curve is non-increasing.
  if (saa == 0 || sbb == 0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

// Relative error, absolute where the reference is below 1e-6.
double max_rel_error(const Tensor& got, const Tensor& want) {
  if (got.shape() != want.shape()) return INFINITY;
  double worst = 0.0;
  for (std::size_t i = 0; i < got.size(); ++i) {
    const double d = std::fabs(got[i] - want[i]), m = std::fabs(want[i]);
    worst = std::max(worst, m >= 1e-6 ? d / m : d);
  }
  return worst;
}

// ---- shared desk settings ------------------------------------------------------

// Blobs at MNIST scale, wide-uniform weights, ten clients of twenty samples,
// one client attacked per sample slot.
harness::ExperimentConfig desk(const std::string& model, std::size_t batch, const std::string& method) {
  json j = {{"dataset", {{"source", "synthetic"}, {"kind", "blobs"}, {"n", 200}, {"shape", {1, 28, 28}},
                         {"classes", 10}, {"test_n", 0}}},
            {"model", {{"name", model}, {"hidden", model == "mlp3" ? 256 : 0}, {"init", "wide-uniform"},
                       {"low", -0.5}, {"high", 0.5}}},
            {"fl", {{"clients", 10}, {"batch_size", batch}, {"local_steps", 1}, {"lr", 1e-4}}},
            {"attack", {{"method", method}, {"eta", 1e-3}, {"iterations", 3000}, {"clients", 10}}},
            {"metrics", {{"dump_images", true}}},
            {"seed", 2024}};
  return harness::config_from_json(j);
}

struct Runs {
  fs::path root;
  std::map<std::string, harness::ExperimentSummary> cache;

  const harness::ExperimentSummary& get(const std::string& name, const harness::ExperimentConfig& cfg) {
    auto it = cache.find(name);
    if (it != cache.end()) return it->second;
    const auto t0 = std::chrono::steady_clock::now();
    auto s = harness::run_experiment(cfg, root / name);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("  run %-22s %3zu attacks  psnr %.2f  (%.0f s)\n", name.c_str(), s.attacks.size(), s.psnr_mean,
                secs);
    std::fflush(stdout);
    return cache.emplace(name, std::move(s)).first->second;
  }
};

double median_ratio(const harness::ExperimentSummary& s) {
  std::vector<double> per_attack;
  for (const auto& a : s.attacks) {
    std::vector<double> r;
    for (const auto& row : a.trace.rows)
      if (row.two_mu_over_L) r.push_back(*row.two_mu_over_L);
    if (!r.empty()) per_attack.push_back(median(r));
  }
  return median(per_attack);
}

// ---- criteria --------------------------------------------------------------------

Verdict operator_gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto suite = gradcheck::run_operator_suite(777, 50);
  double worst = 0.0;
  std::string worst_op;
  for (const auto& r : suite)
    if (r.worst >= worst) {
      worst = r.worst;
      worst_op = r.op;
    }

  // <grad_w L, v> differentiated with respect to x on a two-layer MLP.
  Rng rng(778);
  const nn::Model m = nn::make_model("mlp2", {6}, 4, 5);
  const nn::ParameterSet p = nn::init_params(m, nn::InitScheme::wide_uniform(-0.8, 0.8), 9);
  const Tensor targets = ops::one_hot({1, 3}, 4);
  std::vector<Tensor> v;
  for (const auto& e : m.layout().entries) v.push_back(gradcheck::uniform(rng, e.shape));
  auto s_of = [&](const ad::Var& x, bool retain) {
    const auto lg = nn::loss_and_param_grads(m, nn::param_leaves(p), x, ad::Var::constant(targets), retain);
    ad::Var s = ad::Var::constant(Tensor::scalar(0.0));
    for (std::size_t i = 0; i < v.size(); ++i) s = s + ad::sum(lg.grads[i] * ad::Var::constant(v[i]));
    return s;
  };
  const Tensor x0 = gradcheck::uniform(rng, {2, 6}, 0.1, 0.9);
  const ad::Var x = ad::Var::leaf(x0);
  const Tensor analytic = ad::grad(s_of(x, true), {x})[0].value();
  const Tensor numeric =
      finite_difference_gradient([&](const Tensor& t) { return s_of(ad::Var::constant(t), false).item(); }, x0);
  const double second = max_rel_error(analytic, numeric);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {worst < 1e-4 && second < 1e-3 && secs < 120.0,
          std::to_string(suite.size()) + " ops x 50 cases, worst rel " + fmt("%.2e", worst) + " (" + worst_op +
              "), second-order rel " + fmt("%.2e", second) + ", " + fmt("%.1f", secs) + " s"};
}

Verdict hvp_estimate() {
  Rng rng(90210);
  double worst_ratio = 0.0;  // error / (10 k)
  int cases = 0;
  for (int t = 0; t < 30; ++t) {
    const std::size_t n = 1 + rng.below(64);
    std::vector<double> mv(n * n), eye(n * n, 0.0);
    for (double& e : mv) e = rng.uniform(-1, 1);
    for (std::size_t i = 0; i < n; ++i) eye[i * n + i] = 0.1;
    const Tensor M({n, n}, mv);
    const Tensor A = ops::add(ops::matmul(M, M, true, false), Tensor({n, n}, eye));
    std::vector<double> bv(n);
    for (double& e : bv) e = rng.uniform(-1, 1);
    const Tensor b({n}, bv);
    // D(x) = x^T A x / 2 - b^T x, so grad D = A x - b and the Hessian is A.
    auto grad_at = [&](const Tensor& x) { return ops::sub(ops::matmul(A, x.reshaped({n, 1})).reshaped({n}), b); };
    std::vector<double> xv(n);
    for (double& e : xv) e = rng.uniform(-1, 1);
    const Tensor x({n}, xv);
    const Tensor d1 = grad_at(x);
    double norm = 0;
    for (std::size_t i = 0; i < n; ++i) norm += d1[i] * d1[i];
    norm = std::sqrt(norm);
    std::vector<double> u(n);
    for (std::size_t i = 0; i < n; ++i) u[i] = d1[i] / norm;
    std::vector<double> exact(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) exact[i] += A[i * n + j] * u[j];
    for (double k : {1e-2, 1e-3, 1e-4}) {
      // With lambda = 1 the blended direction is the probed gradient alone.
      const Tensor d2 = attack::regularized_direction(x, 1.0, k, attack::Probe::Ascent, grad_at);
      double err = 0, ref = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const double est = (d2[i] - d1[i]) / k;
        err += (est - exact[i]) * (est - exact[i]);
        ref += exact[i] * exact[i];
      }
      worst_ratio = std::max(worst_ratio, std::sqrt(err / ref) / (10 * k));
      ++cases;
    }
  }
  return {worst_ratio <= 1.0, std::to_string(cases) + " cases, worst relative error / (10 k) = " +
                                   fmt("%.2e", worst_ratio)};
}

Verdict step_condition() {
  Rng rng(4242);
  int wrong = 0, cases = 0;
  for (int t = 0; t < 20; ++t) {
    const double a = std::exp(rng.uniform(std::log(0.1), std::log(20.0)));
    const double x0 = rng.uniform(0.5, 2.0);
    // D(x) = a x^2 / 2 probed from x' = x0 against the minimiser 0.
    const double ratio = metrics::mu_l_estimate(Tensor::from({x0}), Tensor::from({0.0}), Tensor::from({a * x0})).ratio;
    for (double f : {1 - 1e-6, 1 + 1e-6}) {
      double x = x0;
      for (int i = 0; i < 1000000; ++i) x -= ratio * f * a * x;
      const bool converged = std::fabs(x) < 0.5 * x0;
      wrong += converged != (f < 1);
      ++cases;
    }
  }
  // y = x^2 at x = 0.5, unit probe against the gradient, blend 0.3.
  auto grad_at = [](const Tensor& x) { return ops::scale(x, 2.0); };
  const double toy = attack::regularized_direction(Tensor::from({0.5}), 0.3, 1.0, attack::Probe::Descent, grad_at)[0];
  return {wrong == 0 && std::fabs(toy - 0.4) < 1e-15,
          std::to_string(cases - wrong) + "/" + std::to_string(cases) + " boundary cases, toy blend " +
              fmt("%.17g", toy)};
}

Verdict baseline_plateau(Runs& runs) {
  const auto& s = runs.get("mlp3_b1_l2", desk("mlp3", 1, "l2"));
  std::vector<double> rms, l2, ps;
  for (const auto& a : s.attacks) {
    rms.push_back(a.gd_rms);
    l2.push_back(a.gd_l2);
    ps.push_back(a.report.psnr_mean);
  }
  const double g = mean(rms), p = mean(ps);
  return {g >= 0.1 && g <= 0.3 && p >= 8 && p <= 13,
          "mean GD(rms) " + fmt("%.3f", g) + " (median " + fmt("%.3f", median(rms)) + ", raw L2 mean " +
              fmt("%.3g", mean(l2)) + "), mean PSNR " + fmt("%.2f", p) + " (median " + fmt("%.2f", median(ps)) +
              ", range " + fmt("%.1f", *std::min_element(ps.begin(), ps.end())) + ".." +
              fmt("%.1f", *std::max_element(ps.begin(), ps.end())) + ")"};
}

Verdict fedleak_gain(Runs& runs) {
  bool ok = true;
  std::string detail;
  for (const auto& [model, batch] : std::vector<std::pair<std::string, std::size_t>>{{"mlp3", 1}, {"convnet", 4}, {"convnet", 8}}) {
    const std::string tag = model + "_b" + std::to_string(batch);
    const double f = runs.get(tag + "_fedleak", desk(model, batch, "fedleak")).psnr_mean;
    const double l = runs.get(tag + "_l2", desk(model, batch, "l2")).psnr_mean;
    ok = ok && f - l >= 4.0;
    detail += (detail.empty() ? "" : ", ") + tag + " " + fmt("%.2f", f) + " vs " + fmt("%.2f", l) + " (" +
              fmt("%+.2f", f - l) + " dB)";
  }
  return {ok, detail};
}

Verdict curvature_ratio(Runs& runs) {
  const double f = median_ratio(runs.get("mlp3_b1_fedleak", desk("mlp3", 1, "fedleak")));
  const double l = median_ratio(runs.get("mlp3_b1_l2", desk("mlp3", 1, "l2")));
  return {f >= 2 * l, "median 2mu/L fedleak " + fmt("%.4g", f) + " vs l2 " + fmt("%.4g", l)};
}

Verdict label_recovery() {
  int exact = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(derive_seed(5150, "labels", seed));
    const std::size_t classes = 10, B = 1 + rng.below(classes);
    const nn::Model m = nn::make_model("mlp2", {1, 8, 8}, classes, 32);
    const nn::ParameterSet p = nn::init_params(m, nn::InitScheme::default_random(), seed);
    std::vector<int> all(classes);
    std::iota(all.begin(), all.end(), 0);
    rng.shuffle(all.begin(), all.end());
    std::vector<int> truth(all.begin(), all.begin() + static_cast<long>(B));
    const Tensor x = gradcheck::uniform(rng, {B, 1, 8, 8}, 0.0, 1.0);
    const auto g = nn::loss_and_param_grads(m, p, x, truth).grads;
    auto got = labels::infer_labels(labels::head_gradient(m, g), B);
    std::sort(got.begin(), got.end());
    std::sort(truth.begin(), truth.end());
    exact += got == truth;
  }
  Rng rng(5151);
  int bad_sums = 0;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t K = 1 + rng.below(20), N = 2 + rng.below(20), B = 1 + rng.below(64);
    const Tensor dw = gradcheck::uniform(rng, {K, N}, -1.0, 1.0);
    const auto counts = labels::infer_label_counts(dw, B);
    bad_sums += std::accumulate(counts.begin(), counts.end(), std::size_t{0}) != B;
  }
  return {exact == 100 && bad_sums == 0,
          std::to_string(exact) + "/100 exact recoveries, " + std::to_string(bad_sums) + "/1000 count sums off"};
}

Verdict fisher_probe() {
  const auto ds = data::synth_dataset(data::SynthKind::Blobs, 16, {1, 16, 16}, 10, 606);
  const nn::Model m = nn::make_model("convnet", {1, 16, 16}, 10, 0);
  const nn::ParameterSet p = nn::init_params(m, nn::InitScheme::default_random(), 607);
  std::vector<std::size_t> idx(8);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const auto rep = metrics::fisher_correlation(m, p, ds.batch(idx), ds.batch_labels(idx), 256, 608);
  return {rep.mean >= 0.5, "r = " + fmt("%.4f", rep.mean) + " +- " + fmt("%.4f", rep.stdev) + " over " +
                               std::to_string(rep.per_sample.size()) + " samples, " +
                               std::to_string(rep.elements) + " entries each"};
}

// Cheaper than the full desk setting: each grid point is a full FL round plus
// three attacked clients.
harness::ExperimentConfig defense_base() {
  json j = {{"dataset", {{"source", "synthetic"}, {"kind", "blobs"}, {"n", 100}, {"shape", {1, 16, 16}},
                         {"classes", 10}, {"test_n", 50}}},
            {"model", {{"name", "mlp2"}, {"hidden", 64}, {"init", "wide-uniform"}, {"low", -0.5}, {"high", 0.5}}},
            {"fl", {{"clients", 10}, {"batch_size", 1}, {"local_steps", 1}, {"lr", 1e-4}}},
            {"attack", {{"method", "fedleak"}, {"eta", 1e-3}, {"iterations", 3000}, {"clients", 3}}},
            {"metrics", {{"dump_images", false}}},
            {"seed", 77}};
  return harness::config_from_json(j);
}

Verdict defense_monotone(Runs& runs) {
  struct Curve {
    std::string name, kind, axis;
    std::vector<json> values;  // weakest to strongest
  };
  const std::vector<Curve> curves{{"dp", "gaussian-dp", "defense.epsilon", {1e4, 1e3, 1e2, 1e1, 1.0}},
                                  {"sparsify", "sparsify", "defense.keep", {0.9, 0.7, 0.5, 0.3, 0.1}}};
  bool ok = true;
  std::string detail;
  for (const auto& c : curves) {
    auto cfg = harness::with_value(defense_base(), "defense.kind", c.kind);
    const fs::path dir = runs.root / ("sweep_" + c.name);
    const auto t0 = std::chrono::steady_clock::now();
    const auto rows = harness::sweep(cfg, c.axis, c.values, dir, 1);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::vector<double> strength, psnr;
    std::string pts;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (!rows[i].ok) {
        ok = false;
        pts += " error(" + rows[i].error + ")";
        continue;
      }
      strength.push_back(static_cast<double>(i));
      psnr.push_back(rows[i].psnr);
      pts += " " + fmt("%.1f", rows[i].psnr);
    }
    const bool csv = fs::exists(dir / "sweep.csv");
    const double rho = spearman(strength, psnr);
    ok = ok && csv && rho <= 0.0;
    detail += (detail.empty() ? "" : "; ") + c.name + " rho " + fmt("%+.2f", rho) + " psnr" + pts +
              (csv ? "" : " (no sweep.csv)") + " [" + fmt("%.0f", secs) + " s]";
  }
  return {ok, detail};
}

harness::ExperimentConfig convnet_small_batch(std::size_t attacked) {
  auto cfg = desk("convnet", 4, "fedleak");
  cfg.attack.clients = attacked;
  return cfg;
}

Verdict magnitude_partition(Runs& runs) {
  auto top = convnet_small_batch(4);
  top.defense.kind = defense::Kind::Expose;
  top.defense.fraction = 0.2;
  auto bottom = top;
  top.defense.band = defense::Band::Top;
  bottom.defense.band = defense::Band::Bottom;
  const double t = runs.get("convnet_b4_expose_top", top).psnr_mean;
  const double b = runs.get("convnet_b4_expose_bottom", bottom).psnr_mean;
  return {t - b >= 3.0, "top-20% " + fmt("%.2f", t) + " vs bottom-20% " + fmt("%.2f", b) + " (" +
                            fmt("%+.2f", t - b) + " dB)"};
}

Verdict min_removal() {
  Rng rng(31337);
  std::size_t violations = 0, oracle_violations = 0, strict = 0;
  for (int t = 0; t < 1000; ++t) {
    std::vector<double> v(2 + rng.below(40));
    // Half the multisets are small integers so duplicates and ties occur.
    const bool discrete = t % 2 == 0;
    for (double& e : v) e = discrete ? static_cast<double>(rng.below(5)) : rng.uniform(-10, 10);
    const auto verdict = metrics::min_removal_check(v);
    violations += !verdict.holds;
    // Direct check in extended precision.
    long double sum = 0;
    for (double e : v) sum += e;
    const auto mn = std::min_element(v.begin(), v.end());
    const long double old_mean = sum / v.size();
    const long double new_mean = (sum - *mn) / (v.size() - 1);
    const bool strict_case = *mn < old_mean;
    strict += strict_case;
    oracle_violations += strict_case ? !(new_mean > old_mean) : !(new_mean >= old_mean);
    oracle_violations += verdict.strict_expected != strict_case;
  }
  return {violations == 0 && oracle_violations == 0,
          std::to_string(violations) + " violations, " + std::to_string(oracle_violations) +
              " oracle disagreements, " + std::to_string(strict) + " strict cases"};
}

Verdict uniqueness() {
  const auto ds = data::synth_dataset(data::SynthKind::Blobs, 10, {1, 8, 8}, 10, 88);
  const nn::Model m = nn::make_model("mlp2", {1, 8, 8}, 10, 32);
  const nn::ParameterSet p = nn::init_params(m, nn::InitScheme::default_random(), 89);
  const std::vector<std::size_t> one{0};
  const Tensor x = ds.batch(one);
  const auto y = ds.batch_labels(one);
  const auto live = metrics::uniqueness_probe(m, p, x, y, 1000, 0.1, 90);
  const auto dead = metrics::uniqueness_probe(m, nn::ParameterSet::zeros(m.layout()), x, y, 100, 0.1, 91);
  return {live.trials == 1000 && live.collisions == 0 && dead.collisions > 0,
          std::to_string(live.collisions) + "/1000 collisions (min distance " + fmt("%.3g", live.min_distance) +
              "), zero-weight net " + std::to_string(dead.collisions) + "/" + std::to_string(dead.trials)};
}

Verdict local_steps(Runs& runs) {
  auto eight = desk("mlp3", 1, "fedleak");
  eight.fl.local_steps = 8;
  const double a = runs.get("mlp3_b1_fedleak", desk("mlp3", 1, "fedleak")).psnr_mean;
  const double b = runs.get("mlp3_b1_steps8_fedleak", eight).psnr_mean;
  return {a - b >= 2.0, "steps=1 " + fmt("%.2f", a) + " vs steps=8 " + fmt("%.2f", b) + " (" +
                            fmt("%+.2f", b - a) + " dB)"};
}

Verdict determinism(Runs& runs) {
  json j = {{"dataset", {{"source", "synthetic"}, {"n", 60}, {"shape", {1, 16, 16}}, {"classes", 5}, {"test_n", 10}}},
            {"model", {{"name", "convnet"}, {"init", "wide-uniform"}}},
            {"fl", {{"clients", 3}, {"rounds", 2}, {"batch_size", 2}, {"local_steps", 2}, {"lr", 0.01}}},
            {"defense", {{"kind", "gaussian-dp"}, {"epsilon", 50}}},
            {"attack", {{"iterations", 100}, {"eta", 0.01}, {"clients", 2}, {"restarts", 2}}},
            {"attack_rounds", {0, 1}},
            {"seed", 99}};
  const auto cfg = harness::config_from_json(j);
  harness::run_experiment(cfg, runs.root / "determinism_a");
  harness::run_experiment(cfg, runs.root / "determinism_b");
  std::size_t files = 0, differ = 0;
  for (const auto& e : fs::recursive_directory_iterator(runs.root / "determinism_a")) {
    if (!e.is_regular_file() || e.path().extension() != ".csv") continue;
    const auto rel = fs::relative(e.path(), runs.root / "determinism_a");
    ++files;
    differ += digest::read_file(e.path()) != digest::read_file(runs.root / "determinism_b" / rel);
  }
  return {files > 0 && differ == 0, std::to_string(files) + " CSV files compared, " + std::to_string(differ) +
                                        " differ"};
}

}  // namespace

int main(int argc, char** argv) {
  fs::path out = "acceptance_out";
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--out" && i + 1 < argc) {
      out = argv[++i];
    } else {
      only.insert(std::stoi(a));
    }
  }
  fs::create_directories(out);
  Runs runs{out, {}};

  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"operator_gradients", operator_gradients},
      {"hvp_estimate", hvp_estimate},
      {"step_condition", step_condition},
      {"baseline_plateau", [&] { return baseline_plateau(runs); }},
      {"fedleak_gain", [&] { return fedleak_gain(runs); }},
      {"curvature_ratio", [&] { return curvature_ratio(runs); }},
      {"label_recovery", label_recovery},
      {"fisher_probe", fisher_probe},
      {"defense_monotone", [&] { return defense_monotone(runs); }},
      {"magnitude_partition", [&] { return magnitude_partition(runs); }},
      {"min_removal", min_removal},
      {"uniqueness", uniqueness},
      {"local_steps", [&] { return local_steps(runs); }},
      {"determinism", [&] { return determinism(runs); }},
  };

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int n = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(n)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failed += !v.pass;
    std::printf("%s %2d %s: %s [%.1f s]\n", v.pass ? "PASS" : "FAIL", n, criteria[i].first.c_str(), v.detail.c_str(),
                secs);
    std::fflush(stdout);
  }
  return failed ? 1 : 0;
}
