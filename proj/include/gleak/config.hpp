#pragma once
// Experiment configuration: a strict JSON schema with defaults for every
// field except the dataset source and the model name.

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "gleak/attack.hpp"
#include "gleak/data.hpp"
#include "gleak/defense.hpp"
#include "gleak/fl.hpp"
#include "gleak/model.hpp"

namespace gleak::harness {

/// Malformed or invalid configuration. The message names the line for
/// syntax errors and the dotted field path otherwise.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DatasetConfig {
  std::string source;  // "synthetic" or "idx"
  data::SynthKind kind = data::SynthKind::Blobs;
  std::size_t n = 200;
  Shape shape{1, 28, 28};
  std::size_t classes = 10;
  std::size_t test_n = 100;  // held-out samples for accuracy
  std::string images, labels;  // idx paths
  std::size_t limit = 0;

  friend bool operator==(const DatasetConfig&, const DatasetConfig&) = default;
};

struct ModelConfig {
  std::string name;
  std::size_t hidden = 0;
  std::string init = "default";  // "default", "wide-uniform", "file"
  double low = -0.5, high = 0.5;
  std::string path;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct FlSettings {
  std::size_t clients = 10;
  std::size_t rounds = 1;
  std::size_t participants = 0;
  std::size_t batch_size = 1;
  std::size_t local_steps = 1;
  double lr = 1e-4;
  fl::PartitionSpec partition;  // seed is derived, not configured

  friend bool operator==(const FlSettings&, const FlSettings&) = default;
};

struct AttackSettings {
  attack::AttackConfig core;  // seed is derived, not configured
  std::string labels = "infer";  // "infer" or "truth"
  std::size_t clients = 1;       // attacked clients per logged round

  friend bool operator==(const AttackSettings&, const AttackSettings&) = default;
};

struct MetricsSettings {
  bool exclusive_matching = false;
  bool dump_images = true;

  friend bool operator==(const MetricsSettings&, const MetricsSettings&) = default;
};

struct ExperimentConfig {
  DatasetConfig dataset;
  ModelConfig model;
  FlSettings fl;
  defense::DefenseConfig defense;  // seed is derived, not configured
  AttackSettings attack;
  std::vector<std::size_t> attack_rounds{0};
  MetricsSettings metrics;
  std::string output = "out";
  std::uint64_t seed = 0;

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

// Iteration cap applied unless the full budget is requested.
inline constexpr std::size_t kCiIterations = 3000;

ExperimentConfig parse_config(const std::string& text, const std::string& origin = "config");
ExperimentConfig load_config(const std::filesystem::path& path);
ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& cfg);
void save_config(const std::filesystem::path& path, const ExperimentConfig& cfg);

// Cross-field checks (attack rounds inside the simulated range, names
// resolvable, ranges). Throws ConfigError.
void validate(const ExperimentConfig& cfg);

// Replaces the value at a dotted path such as "attack.R" and revalidates.
// Throws ConfigError when the path does not exist.
ExperimentConfig with_value(const ExperimentConfig& cfg, const std::string& path, const nlohmann::json& value);

}  // namespace gleak::harness
