// Command-line front end for experiments.
//
// Exit codes: 0 success, 2 configuration or usage error, 3 data or file
// format error, 4 any other runtime failure.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>

#include "gleak/experiment.hpp"
#include "gleak/tensor_io.hpp"

namespace {

using namespace gleak;
using nlohmann::json;

enum Exit { kOk = 0, kConfig = 2, kData = 3, kRuntime = 4 };

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool full = false;
};

void add_common(CLI::App* app, Common& c, bool needs_config = true) {
  auto* opt = app->add_option("--config", c.config, "JSON experiment config");
  if (needs_config) opt->required();
  app->add_option("--seed", c.seed, "override the master seed");
  app->add_option("--out", c.out, "output directory (defaults to the config's output field)");
  app->add_flag("--full", c.full, "use the configured iteration count instead of the CI cap");
}

harness::ExperimentConfig resolve(const Common& c) {
  auto cfg = harness::load_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (!c.out.empty()) cfg.output = c.out;
  harness::validate(cfg);
  return cfg;
}

void print_summary(const harness::ExperimentSummary& s, bool with_accuracy) {
  if (with_accuracy) std::printf("accuracy %.4f\n", s.accuracy);
  for (const auto& a : s.attacks) {
    std::printf("round %zu client %zu: psnr %.3f ssim %.4f gd_rms %.4g\n", a.round, a.client, a.report.psnr_mean,
                a.report.ssim_mean, a.gd_rms);
  }
  if (!s.attacks.empty()) std::printf("mean psnr %.3f ssim %.4f\n", s.psnr_mean, s.ssim_mean);
}

int run(int argc, char** argv) {
  CLI::App app{"Gradient leakage experiments"};
  app.require_subcommand(1);

  Common run_c, sim_c, atk_c, diag_c, sweep_c;
  auto* run_cmd = app.add_subcommand("run", "simulate rounds and attack the logged clients");
  add_common(run_cmd, run_c);

  auto* sim_cmd = app.add_subcommand("simulate", "federated training only, writing round logs");
  add_common(sim_cmd, sim_c);

  std::string round_log;
  auto* atk_cmd = app.add_subcommand("attack", "attack the clients of a saved round log");
  add_common(atk_cmd, atk_c);
  atk_cmd->add_option("--round-log", round_log, "round log directory")->required();

  std::string recon, truth, eval_out;
  bool exclusive = false;
  auto* eval_cmd = app.add_subcommand("evaluate", "score saved reconstructions against saved truths");
  eval_cmd->add_option("--recon", recon, "reconstruction tensor (GLT1)")->required();
  eval_cmd->add_option("--truth", truth, "ground-truth tensor (GLT1)")->required();
  eval_cmd->add_option("--out", eval_out, "output directory")->required();
  eval_cmd->add_flag("--exclusive", exclusive, "one-to-one matching");

  std::vector<std::string> suites;
  auto* diag_cmd = app.add_subcommand("diagnose", "run analysis suites");
  add_common(diag_cmd, diag_c);
  diag_cmd->add_option("--suite", suites, "mu-l, fisher, uniqueness, min-removal (repeatable; default all)");

  std::string axis, values_text;
  std::size_t parallel = 1;
  auto* sweep_cmd = app.add_subcommand("sweep", "one experiment per value of a config field");
  add_common(sweep_cmd, sweep_c);
  sweep_cmd->add_option("--axis", axis, "dotted config path, e.g. defense.keep")->required();
  sweep_cmd->add_option("--values", values_text, "JSON array of values")->required();
  sweep_cmd->add_option("--parallel", parallel, "concurrent sub-experiments")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  if (*run_cmd || *sim_cmd) {
    const auto& c = *run_cmd ? run_c : sim_c;
    const auto cfg = resolve(c);
    harness::RunOptions opts{c.full, static_cast<bool>(*sim_cmd)};
    print_summary(harness::run_experiment(cfg, cfg.output, opts), true);
  } else if (*atk_cmd) {
    const auto cfg = resolve(atk_c);
    print_summary(harness::attack_round_log(cfg, round_log, cfg.output, {atk_c.full, false}), false);
  } else if (*eval_cmd) {
    const auto rep = harness::evaluate_files(recon, truth, eval_out, exclusive);
    std::printf("psnr mean %.3f median %.3f ssim mean %.4f median %.4f\n", rep.psnr_mean, rep.psnr_median,
                rep.ssim_mean, rep.ssim_median);
  } else if (*diag_cmd) {
    const auto cfg = resolve(diag_c);
    std::vector<harness::Suite> list;
    for (const auto& s : suites) list.push_back(harness::parse_suite(s));
    if (list.empty()) {
      list = {harness::Suite::MuL, harness::Suite::Fisher, harness::Suite::Uniqueness, harness::Suite::MinRemoval};
    }
    std::cout << harness::diagnose(cfg, list, cfg.output, {diag_c.full, false}).dump(2) << "\n";
  } else if (*sweep_cmd) {
    const auto cfg = resolve(sweep_c);
    json values;
    try {
      values = json::parse(values_text);
    } catch (const json::parse_error& e) {
      throw harness::ConfigError(std::string("--values: ") + e.what());
    }
    if (!values.is_array()) throw harness::ConfigError("--values must be a JSON array");
    const auto rows = harness::sweep(cfg, axis, values.get<std::vector<json>>(), cfg.output, parallel,
                                     {sweep_c.full, false});
    bool all_ok = true;
    for (const auto& r : rows) {
      if (r.ok) {
        std::printf("%s: accuracy %.4f psnr %.3f ssim %.4f\n", r.value.dump().c_str(), r.accuracy, r.psnr, r.ssim);
      } else {
        std::printf("%s: error: %s\n", r.value.dump().c_str(), r.error.c_str());
        all_ok = false;
      }
    }
    if (!all_ok) return kRuntime;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const gleak::harness::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const gleak::data::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const gleak::io::FormatError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
}
