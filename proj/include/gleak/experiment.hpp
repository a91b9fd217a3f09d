#pragma once
// Experiment orchestration: dataset and model construction from a config,
// simulated rounds, attacks on logged clients, and report emission.
//
// Output directory layout:
//   config.json            resolved configuration
//   rounds/round_NNNN/     round logs for the attacked rounds
//   attacks/rNNNN_cNNNN/   trace.csv, recon.glt, truth.glt, image dumps
//   metrics.csv            one row per truth image
//   metrics.json           aggregates
//   manifest.json          input hashes and a checksum per output file

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "gleak/attack.hpp"
#include "gleak/config.hpp"
#include "gleak/data.hpp"
#include "gleak/fl.hpp"
#include "gleak/metrics.hpp"
#include "gleak/model.hpp"

namespace gleak::harness {

struct RunOptions {
  bool full = false;       // keep the configured iteration count
  bool simulate_only = false;
};

struct Datasets {
  data::Dataset train;
  data::Dataset test;
};

Datasets load_datasets(const ExperimentConfig& cfg);
nn::Model build_model(const ExperimentConfig& cfg, const data::Dataset& train);
nn::ParameterSet initial_params(const ExperimentConfig& cfg, const nn::Model& model);
fl::FlConfig fl_config(const ExperimentConfig& cfg);
// Attack settings with the iteration budget applied and the seed derived
// from (round, client).
attack::AttackConfig attack_config(const ExperimentConfig& cfg, std::size_t round, std::size_t client,
                                   bool full);

// Fraction of test samples whose arg-max logit equals the label.
double accuracy(const nn::Model& model, const nn::ParameterSet& params, const data::Dataset& test);

struct AttackOutcome {
  std::size_t round = 0;
  std::size_t client = 0;
  attack::ReconTrace trace;
  std::vector<int> labels;  // labels handed to the attack
  Tensor truths;            // every sample behind the update, [T,C,H,W]
  metrics::MetricsReport report;
  double gd_l2 = 0.0;   // plain Euclidean norm over all gradient entries
  double gd_rms = 0.0;  // the same divided by sqrt(n)
};

/// Reconstructs the batch behind one client update. The batch size comes
/// from the round log; labels are inferred from the head gradient or taken
/// from the truth as configured.
AttackOutcome attack_client(const ExperimentConfig& cfg, const nn::Model& model, const data::Dataset& train,
                            const fl::RoundLog& log, const fl::ClientRecord& rec, bool full);

struct ExperimentSummary {
  double accuracy = 0.0;
  std::vector<AttackOutcome> attacks;
  double psnr_mean = 0.0, psnr_median = 0.0;
  double ssim_mean = 0.0, ssim_median = 0.0;
};

/// Runs the whole protocol and writes the output directory. Outputs are
/// staged next to `out` and moved into place only on success. An existing
/// `out` is replaced only if it holds a previous run (a manifest.json).
ExperimentSummary run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out,
                                 const RunOptions& opts = {});

/// Attacks the clients of a saved round log and writes attacks/, metrics and
/// a manifest to `out`.
ExperimentSummary attack_round_log(const ExperimentConfig& cfg, const std::filesystem::path& round_dir,
                                   const std::filesystem::path& out, const RunOptions& opts = {});

/// Scores saved reconstructions ([B,C,H,W] GLT1) against saved truths.
metrics::MetricsReport evaluate_files(const std::filesystem::path& recon, const std::filesystem::path& truth,
                                      const std::filesystem::path& out, bool exclusive);

struct SweepRow {
  nlohmann::json value;
  bool ok = false;
  std::string error;
  double accuracy = 0.0, psnr = 0.0, ssim = 0.0;
};

/// One sub-experiment per value of `axis` (a dotted config path), run up to
/// `parallel` at a time in out/NN_<value>/. Failed sub-runs are recorded and
/// the rest continue. Writes out/sweep.csv and out/manifest.json.
std::vector<SweepRow> sweep(const ExperimentConfig& cfg, const std::string& axis,
                            const std::vector<nlohmann::json>& values, const std::filesystem::path& out,
                            std::size_t parallel, const RunOptions& opts = {});

enum class Suite { MuL, Fisher, Uniqueness, MinRemoval };
Suite parse_suite(const std::string& s);
std::string suite_name(Suite s);

/// Runs analysis suites on the configured model and data; writes
/// out/diagnostics.json and returns its content.
nlohmann::json diagnose(const ExperimentConfig& cfg, const std::vector<Suite>& suites,
                        const std::filesystem::path& out, const RunOptions& opts = {});

// RFC 4180 field: quoted when it contains a comma, quote, CR or LF.
std::string csv_field(const std::string& s);
std::string format_number(double v);

}  // namespace gleak::harness
