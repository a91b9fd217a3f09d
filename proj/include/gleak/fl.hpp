#pragma once
// Single-process simulation of federated rounds: partition, local SGD,
// server-side gradient estimation from parameter deltas, and averaging.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gleak/data.hpp"
#include "gleak/defense.hpp"
#include "gleak/model.hpp"

namespace gleak::fl {

enum class PartitionMode { Iid, LabelSkew, QuantitySkew, FeatureSkew, Dirichlet };
std::string partition_mode_name(PartitionMode m);
PartitionMode parse_partition_mode(const std::string& s);

struct PartitionSpec {
  PartitionMode mode = PartitionMode::Iid;
  std::size_t clients = 10;
  std::size_t classes_per_client = 1;  // label skew
  std::vector<double> sizes;           // quantity skew: relative client sizes
  std::size_t tv_groups = 5;           // feature skew: percentile bands
  double alpha = 0.5;                  // dirichlet concentration
  std::uint64_t seed = 0;

  friend bool operator==(const PartitionSpec&, const PartitionSpec&) = default;
};

using ClientIndices = std::vector<std::vector<std::size_t>>;

/// Every sample goes to exactly one client; client lists are ascending.
/// Throws std::invalid_argument for infeasible specs.
ClientIndices partition(const data::Dataset& dataset, const PartitionSpec& spec);

struct LocalTrainConfig {
  std::size_t steps = 1;
  std::size_t batch_size = 1;
  double lr = 1e-4;
  defense::DefenseConfig defense;  // kind None = undefended
  double sigma_scale = 1.0;        // adaptive DP multiplier for this round
};

struct LocalTrainResult {
  nn::ParameterSet params;
  std::vector<std::vector<std::size_t>> batches;  // dataset indices per step
};

/// Plain SGD over sequential mini-batches of a fixed per-epoch shuffle (the
/// tail shorter than a batch is skipped). Gaussian DP attached per step clips
/// and noises each step's gradient; every other defense (and per-round DP)
/// perturbs the outgoing delta.
LocalTrainResult local_train(const nn::Model& model, const nn::ParameterSet& params,
                             const data::Dataset& dataset, const std::vector<std::size_t>& client,
                             const LocalTrainConfig& cfg, std::uint64_t seed);

/// (w_old - w_new) / (lr * steps).
nn::GradientVector estimate_gradient(const nn::ParameterSet& w_old, const nn::ParameterSet& w_new,
                                     double lr, std::size_t steps);

/// Element-wise running mean in list order (exact for identical inputs).
nn::ParameterSet aggregate(const std::vector<nn::ParameterSet>& sets);

struct FlConfig {
  std::size_t rounds = 1;
  std::size_t participants = 0;  // per round; 0 = every client
  LocalTrainConfig local;
  PartitionSpec partition;
  std::vector<std::size_t> attack_rounds{0};
  std::uint64_t seed = 0;
};

struct ClientRecord {
  std::size_t client = 0;
  nn::ParameterSet w_old;
  nn::ParameterSet w_new;
  nn::GradientVector g_hat;
  // Evaluation only: which samples the client trained on.
  std::vector<std::size_t> truth_indices;
};

struct RoundLog {
  std::size_t round = 0;
  std::vector<std::size_t> participants;
  std::vector<ClientRecord> clients;
  nn::ParameterSet aggregated;
  double lr = 0.0;
  std::size_t steps = 1;
  std::size_t batch_size = 1;
};

struct RunResult {
  std::vector<RoundLog> logs;  // attack rounds only
  nn::ParameterSet final_params;
  ClientIndices partition;
};

RunResult run_rounds(const nn::Model& model, const nn::ParameterSet& init,
                     const data::Dataset& dataset, const FlConfig& cfg);

// Directory with manifest.json plus one GLT1 file per flattened tensor. The
// layout is stored in the manifest so the directory is self-describing.
void save_round_log(const std::filesystem::path& dir, const RoundLog& log);
RoundLog load_round_log(const std::filesystem::path& dir);

}  // namespace gleak::fl
