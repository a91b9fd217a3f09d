#pragma once
// Image reconstruction from shared gradients.
//
// The FedLeak objective matches only the largest-magnitude entries of the
// dummy gradient (index set Lambda) with an L1 term plus a cosine term, adds
// total-variation and activation penalties, and steers with a blend of the
// objective's gradient at x' and at a short probe x' + phi. The L2 and cosine
// baselines share the loop but match the full gradient and skip the blend.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gleak/autodiff.hpp"
#include "gleak/model.hpp"

namespace gleak::attack {

enum class Method { FedLeak, L2, Cosine };
enum class Schedule { Constant, CosineAnnealing };
// Direction of the probe phi relative to the objective gradient.
enum class Probe { Ascent, Descent };

std::string method_name(Method m);
Method parse_method(const std::string& s);
std::string schedule_name(Schedule s);
Schedule parse_schedule(const std::string& s);
std::string probe_name(Probe p);
Probe parse_probe(const std::string& s);

struct AttackConfig {
  double eta = 1e-4;
  std::size_t iterations = 10000;
  double lambda = 0.7;  // blend factor
  double k = 1e-3;      // probe length
  double R = 50;        // matched percentage of gradient entries
  double alpha = 1e-5;  // TV weight
  double beta = 1e-4;   // activation penalty weight
  std::size_t restarts = 1;
  Schedule schedule = Schedule::Constant;
  std::size_t period = 1000;  // cosine-annealing period in iterations
  Method method = Method::FedLeak;
  bool refine_labels = false;
  Probe probe = Probe::Ascent;
  std::uint64_t seed = 0;

  void validate() const;  // std::invalid_argument naming the field
  friend bool operator==(const AttackConfig&, const AttackConfig&) = default;
};

// Lambda: the ceil(R/100 * n) largest-|g| indices, ascending.
std::vector<std::size_t> select_indices(std::span<const double> g, double R);

// Anisotropic TV of a [B,C,H,W] batch, averaged over B.
ad::Var total_variation(const ad::Var& x);
// Sum over layers of mean |activation|.
ad::Var activation_penalty(const std::vector<ad::Var>& activations);

struct DistanceTerms {
  ad::Var l1;      // mean |g' - g_hat| over Lambda
  ad::Var cosine;  // 1 - cos over Lambda
  ad::Var tv;
  ad::Var activation;
  ad::Var total;   // l1 + cosine + alpha tv + beta activation
  bool cosine_degenerate = false;  // a zero norm over Lambda; term fixed at 1
};

// `mask` is 1 on Lambda and 0 elsewhere, same length as the flat gradients.
DistanceTerms distance(const ad::Var& g_prime, const Tensor& g_hat, const Tensor& mask,
                       const ad::Var& x, const std::vector<ad::Var>& activations, double alpha,
                       double beta);

using GradientFn = std::function<Tensor(const Tensor&)>;

// (1 - lambda) d1 + lambda d2 with d1 = grad_at(x), phi = +-k d1 / |d1| and
// d2 = grad_at(x + phi). A zero d1 is returned unprobed, and lambda == 0
// returns d1 without probing. `d1` may be supplied when already known.
Tensor regularized_direction(const Tensor& x, double lambda, double k, Probe probe,
                             const GradientFn& grad_at, const Tensor* d1 = nullptr);

/// Adaptive-moment optimizer over a flat vector (0.9 / 0.999 / 1e-8).
class Adam {
 public:
  explicit Adam(std::size_t n, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  // Returns x - lr * m_hat / (sqrt(v_hat) + eps) after folding in `d`.
  std::vector<double> step(std::span<const double> x, std::span<const double> d, double lr);
  std::size_t steps() const { return t_; }

 private:
  double b1_, b2_, eps_;
  std::size_t t_ = 0;
  std::vector<double> m_, v_;
};

// Step size at iteration `it` (0-based). Cosine annealing decays from eta to
// 0 across each period and jumps back to eta at the next.
double scheduled_eta(const AttackConfig& cfg, std::size_t it);

// Euclidean projection of each row of a [B,N] tensor onto the simplex.
Tensor project_rows_to_simplex(const Tensor& t);

/// Evaluates the configured matching objective and its input gradients.
class Objective {
 public:
  // `observed`, when non-empty, is 1 on the gradient entries the server
  // received and 0 elsewhere; matching then ignores the other entries.
  Objective(const nn::Model& model, const nn::ParameterSet& params, const nn::GradientVector& g_hat,
            const AttackConfig& cfg, Tensor observed = Tensor(Shape{0}));

  struct Eval {
    double value = 0.0;
    Tensor grad_x;
    Tensor grad_targets;  // empty unless requested
    Tensor mask;          // Lambda actually used
    std::size_t selected = 0;
    bool cosine_degenerate = false;
  };

  // x is [B,C,H,W] (reshaped to the model input), targets are [B,N]
  // probability rows. An empty mask selects Lambda from the current dummy
  // gradient (all entries for the baselines).
  Eval evaluate(const Tensor& x, const Tensor& targets, const Tensor& mask, bool want_target_grad) const;

  std::size_t gradient_size() const { return g_hat_.size(); }

 private:
  const nn::Model& model_;
  const nn::ParameterSet& params_;
  Tensor g_hat_;
  AttackConfig cfg_;
  Tensor observed_;
  std::vector<std::size_t> observed_idx_;
};

struct TraceRow {
  std::size_t iteration = 0;
  double distance = 0.0;
  std::size_t selected = 0;
  double grad_norm = 0.0;
  std::optional<double> mu, L, two_mu_over_L;
  bool cosine_degenerate = false;
};

struct ReconTrace {
  std::vector<TraceRow> rows;  // best restart only
  Tensor x;                    // [B,C,H,W], every element in [0,1]
  Tensor label_probs;          // [B,N]
  double final_distance = 0.0;
  std::size_t restart = 0;
  std::vector<double> restart_distances;  // NaN for aborted restarts
  std::vector<std::string> diagnostics;
};

struct AttackInputs {
  const nn::Model* model = nullptr;
  const nn::ParameterSet* params = nullptr;
  const nn::GradientVector* g_hat = nullptr;
  Shape image_shape;               // [B,C,H,W]
  std::vector<int> labels;         // size B, or empty with refine_labels
  const Tensor* ground_truth = nullptr;  // enables mu/L recording
  const Tensor* initial = nullptr;       // overrides the uniform start
  const Tensor* observed = nullptr;      // flat 0/1 mask of received entries; null = all
};

/// Runs the configured method with restarts (restart r seeds with seed + r)
/// and returns the restart with the lowest final distance. Throws
/// std::runtime_error when every restart aborts.
ReconTrace run_attack(const AttackInputs& in, const AttackConfig& cfg);

// CSV columns: iteration,distance,grad_norm,mu,L,two_mu_over_L
void write_trace_csv(const std::filesystem::path& path, const ReconTrace& trace);

}  // namespace gleak::attack
