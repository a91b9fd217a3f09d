#include "gleak/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <optional>
#include <thread>

#include "gleak/digest.hpp"
#include "gleak/labels.hpp"
#include "gleak/rng.hpp"
#include "gleak/tensor_io.hpp"
#include "gleak/tensor_ops.hpp"

namespace gleak::harness {

namespace fs = std::filesystem;
using nlohmann::json;

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + "\"";
}

std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

Datasets load_datasets(const ExperimentConfig& cfg) {
  const auto& d = cfg.dataset;
  Datasets out;
  if (d.source == "synthetic") {
    if (d.test_n > 0 && d.test_n < d.classes) throw ConfigError("field 'dataset.test_n': must be 0 or >= classes");
    out.train = data::synth_dataset(d.kind, d.n, d.shape, d.classes, derive_seed(cfg.seed, "dataset"));
    if (d.test_n > 0) out.test = data::synth_dataset(d.kind, d.test_n, d.shape, d.classes, derive_seed(cfg.seed, "test"));
    return out;
  }
  const auto all = data::load_idx(d.images, d.labels, d.limit);
  if (d.test_n >= all.size()) throw ConfigError("field 'dataset.test_n': leaves no training samples");
  std::vector<std::size_t> head(all.size() - d.test_n), tail(d.test_n);
  std::iota(head.begin(), head.end(), std::size_t{0});
  std::iota(tail.begin(), tail.end(), head.size());
  out.train = all.subset(head);
  out.test = all.subset(tail);
  out.test.classes = out.train.classes = all.classes;
  return out;
}

nn::Model build_model(const ExperimentConfig& cfg, const data::Dataset& train) {
  try {
    return nn::make_model(cfg.model.name, train.sample_shape(), train.classes, cfg.model.hidden);
  } catch (const ShapeError& e) {
    throw ConfigError(std::string("field 'model': ") + e.what());
  }
}

nn::ParameterSet initial_params(const ExperimentConfig& cfg, const nn::Model& model) {
  nn::InitScheme s;
  if (cfg.model.init == "wide-uniform") s = nn::InitScheme::wide_uniform(cfg.model.low, cfg.model.high);
  if (cfg.model.init == "file") s = nn::InitScheme::from_file(cfg.model.path);
  return nn::init_params(model, s, derive_seed(cfg.seed, "init"));
}

fl::FlConfig fl_config(const ExperimentConfig& cfg) {
  fl::FlConfig f;
  f.rounds = cfg.fl.rounds;
  f.participants = cfg.fl.participants;
  f.local.steps = cfg.fl.local_steps;
  f.local.batch_size = cfg.fl.batch_size;
  f.local.lr = cfg.fl.lr;
  f.local.defense = cfg.defense;
  f.local.defense.seed = derive_seed(cfg.seed, "defense");
  f.partition = cfg.fl.partition;
  f.partition.clients = cfg.fl.clients;
  f.partition.seed = derive_seed(cfg.seed, "partition");
  f.attack_rounds = cfg.attack_rounds;
  f.seed = derive_seed(cfg.seed, "fl");
  return f;
}

attack::AttackConfig attack_config(const ExperimentConfig& cfg, std::size_t round, std::size_t client,
                                   bool full) {
  attack::AttackConfig a = cfg.attack.core;
  if (!full) a.iterations = std::min(a.iterations, kCiIterations);
  a.seed = derive_seed(derive_seed(cfg.seed, "attack", round), "client", client);
  return a;
}

double accuracy(const nn::Model& model, const nn::ParameterSet& params, const data::Dataset& test) {
  if (test.size() == 0) return 0.0;
  const Tensor logits = nn::forward(model, params, test.images.reshaped(nn::batch_input_shape(model, test.size()))).logits;
  const std::size_t N = logits.dim(1);
  std::size_t hit = 0;
  for (std::size_t b = 0; b < test.size(); ++b) {
    const double* row = logits.ptr() + b * N;
    hit += static_cast<int>(std::max_element(row, row + N) - row) == test.labels[b];
  }
  return static_cast<double>(hit) / static_cast<double>(test.size());
}

AttackOutcome attack_client(const ExperimentConfig& cfg, const nn::Model& model, const data::Dataset& train,
                            const fl::RoundLog& log, const fl::ClientRecord& rec, bool full) {
  AttackOutcome o;
  o.round = log.round;
  o.client = rec.client;
  const std::size_t B = log.batch_size;
  o.truths = train.batch(rec.truth_indices);
  const auto truth_labels = train.batch_labels(rec.truth_indices);
  if (cfg.attack.labels == "truth") {
    o.labels.assign(truth_labels.begin(), truth_labels.begin() + static_cast<std::ptrdiff_t>(std::min(B, truth_labels.size())));
  } else {
    o.labels = labels::infer_labels(labels::head_gradient(model, rec.g_hat), B);
  }

  Shape shape{B};
  const Shape per = train.sample_shape();
  shape.insert(shape.end(), per.begin(), per.end());
  // The curvature diagnostic needs a truth aligned with the reconstruction.
  const bool aligned = rec.truth_indices.size() == B;
  // Magnitude-band exposure defines what the server receives; match only the
  // nonzero entries. A band of exact zeros carries nothing to restrict to.
  Tensor observed(Shape{0});
  if (cfg.defense.kind == defense::Kind::Expose) {
    const Tensor g = rec.g_hat.flatten();
    std::vector<double> m(g.size());
    bool any = false;
    for (std::size_t i = 0; i < g.size(); ++i) {
      m[i] = g[i] != 0.0 ? 1.0 : 0.0;
      any = any || g[i] != 0.0;
    }
    if (any) observed = Tensor({g.size()}, std::move(m));
  }
  attack::AttackInputs in{&model,   &rec.w_old, &rec.g_hat, shape, o.labels, aligned ? &o.truths : nullptr,
                          nullptr, observed.size() ? &observed : nullptr};
  o.trace = attack::run_attack(in, attack_config(cfg, log.round, rec.client, full));
  o.report = metrics::evaluate(o.trace.x, o.truths, cfg.metrics.exclusive_matching);

  const Tensor gp = nn::loss_and_param_grads(model, rec.w_old, o.trace.x.reshaped(nn::batch_input_shape(model, B)), o.labels)
                        .grads.flatten();
  const Tensor gh = rec.g_hat.flatten();
  o.gd_l2 = metrics::gradient_distance(gp.data(), gh.data(), metrics::GdMetric::L2);
  o.gd_rms = metrics::gradient_rms(gp.data(), gh.data());
  o.report.gradient_l2 = o.gd_l2;
  o.report.gradient_rms = o.gd_rms;
  return o;
}

namespace {

double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

Tensor image_at(const Tensor& batch, std::size_t b) {
  const Shape per(batch.shape().begin() + 1, batch.shape().end());
  const std::size_t n = shape_numel(per);
  return Tensor(per, std::vector<double>(batch.ptr() + b * n, batch.ptr() + (b + 1) * n));
}

std::string attack_dir_name(std::size_t round, std::size_t client) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "r%04zu_c%04zu", round, client);
  return buf;
}

std::string round_dir_name(std::size_t round) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "round_%04zu", round);
  return buf;
}

void summarize(ExperimentSummary& s) {
  std::vector<double> ps, ss;
  for (const auto& a : s.attacks)
    for (const auto& im : a.report.images) {
      ps.push_back(im.psnr);
      ss.push_back(im.ssim);
    }
  if (ps.empty()) return;
  s.psnr_mean = std::accumulate(ps.begin(), ps.end(), 0.0) / static_cast<double>(ps.size());
  s.ssim_mean = std::accumulate(ss.begin(), ss.end(), 0.0) / static_cast<double>(ss.size());
  s.psnr_median = median_of(ps);
  s.ssim_median = median_of(ss);
}

std::string metrics_csv_header() { return "round,client,truth,matched,psnr,ssim\r\n"; }

std::string metrics_csv_rows(const AttackOutcome& a) {
  std::string s;
  for (const auto& im : a.report.images) {
    s += std::to_string(a.round) + ',' + std::to_string(a.client) + ',' + std::to_string(im.truth) + ',' +
         std::to_string(im.matched) + ',' + format_number(im.psnr) + ',' + format_number(im.ssim) + "\r\n";
  }
  return s;
}

json attack_json(const AttackOutcome& a) {
  std::vector<double> ratios;
  for (const auto& r : a.trace.rows)
    if (r.two_mu_over_L) ratios.push_back(*r.two_mu_over_L);
  json j = {{"round", a.round},
            {"client", a.client},
            {"labels", a.labels},
            {"restart", a.trace.restart},
            {"final_distance", a.trace.final_distance},
            {"gd_l2", a.gd_l2},
            {"gd_rms", a.gd_rms},
            {"psnr_mean", a.report.psnr_mean},
            {"psnr_median", a.report.psnr_median},
            {"ssim_mean", a.report.ssim_mean},
            {"ssim_median", a.report.ssim_median},
            {"diagnostics", a.trace.diagnostics}};
  if (!ratios.empty()) j["two_mu_over_L_median"] = median_of(ratios);
  return j;
}

void write_attack(const fs::path& dir, const AttackOutcome& a, bool dump_images) {
  fs::create_directories(dir);
  attack::write_trace_csv(dir / "trace.csv", a.trace);
  io::save_tensor(dir / "recon.glt", a.trace.x);
  io::save_tensor(dir / "truth.glt", a.truths);
  io::save_tensor(dir / "label_probs.glt", a.trace.label_probs);
  write_text(dir / "metrics.csv", metrics_csv_header() + metrics_csv_rows(a));
  if (dump_images) {
    const bool rgb = a.truths.dim(1) == 3;
    if (rgb || a.truths.dim(1) == 1) {
      const char* ext = rgb ? "ppm" : "pgm";
      char name[64];
      for (std::size_t b = 0; b < a.trace.x.dim(0); ++b) {
        std::snprintf(name, sizeof name, "recon_%02zu.%s", b, ext);
        data::write_pnm(dir / name, image_at(a.trace.x, b));
      }
      for (std::size_t b = 0; b < a.truths.dim(0); ++b) {
        std::snprintf(name, sizeof name, "truth_%02zu.%s", b, ext);
        data::write_pnm(dir / name, image_at(a.truths, b));
      }
    }
  }
}

void write_reports(const fs::path& dir, const ExperimentSummary& s, std::optional<double> accuracy) {
  std::string csv = metrics_csv_header();
  json attacks = json::array();
  for (const auto& a : s.attacks) {
    csv += metrics_csv_rows(a);
    attacks.push_back(attack_json(a));
  }
  write_text(dir / "metrics.csv", csv);
  json j = {{"psnr_mean", s.psnr_mean},
            {"psnr_median", s.psnr_median},
            {"ssim_mean", s.ssim_mean},
            {"ssim_median", s.ssim_median},
            {"attacks", attacks}};
  if (accuracy) j["accuracy"] = *accuracy;
  write_text(dir / "metrics.json", j.dump(2) + "\n");
}

struct Input {
  std::string name;
  std::string sha1;
};

std::vector<Input> config_inputs(const ExperimentConfig& cfg) {
  std::vector<Input> in{{"config", digest::git_blob_sha1(config_to_json(cfg).dump())}};
  auto add_file = [&](const std::string& path) {
    try {
      in.push_back({path, digest::git_blob_sha1(digest::read_file(path))});
    } catch (const std::runtime_error& e) {
      throw data::DataError(e.what());
    }
  };
  if (cfg.dataset.source == "idx") {
    add_file(cfg.dataset.images);
    add_file(cfg.dataset.labels);
  }
  if (cfg.model.init == "file") add_file(cfg.model.path);
  return in;
}

// Lists every file under `dir` with its checksum, then writes manifest.json.
void write_manifest(const fs::path& dir, const json& config, const std::vector<Input>& inputs) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files.push_back(fs::relative(e.path(), dir));
  std::sort(files.begin(), files.end());
  json list = json::array();
  for (const auto& f : files) {
    if (f == "manifest.json") continue;
    const std::string bytes = digest::read_file(dir / f);
    list.push_back({{"path", f.generic_string()}, {"bytes", bytes.size()}, {"sha256", digest::sha256_hex(bytes)}});
  }
  std::string joined;
  json in = json::array();
  for (const auto& i : inputs) {
    joined += i.sha1 + " " + i.name + "\n";
    in.push_back({{"name", i.name}, {"git_sha1", i.sha1}});
  }
  const json m = {{"format", "gleak-run"},
                  {"config", config},
                  {"inputs", in},
                  {"input_hash", digest::git_blob_sha1(joined)},
                  {"files", list}};
  write_text(dir / "manifest.json", m.dump(2) + "\n");
}

// Runs `body` against a staging directory and moves it to `out` on success.
template <class Body>
void staged(const fs::path& out_arg, Body body) {
  fs::path out = out_arg.lexically_normal();
  if (out.filename().empty()) out = out.parent_path();
  if (out.empty()) throw ConfigError("output directory is empty");
  if (fs::exists(out) && !fs::is_empty(out) && !fs::exists(out / "manifest.json")) {
    throw ConfigError("output directory " + out.string() + " exists and does not hold a previous run");
  }
  const fs::path staging = out.parent_path() / (out.filename().string() + ".partial");
  fs::remove_all(staging);
  fs::create_directories(staging);
  try {
    body(staging);
  } catch (...) {
    std::error_code ec;
    fs::remove_all(staging, ec);
    throw;
  }
  fs::remove_all(out);
  fs::rename(staging, out);
}

}  // namespace

ExperimentSummary run_experiment(const ExperimentConfig& cfg, const fs::path& out, const RunOptions& opts) {
  validate(cfg);
  const auto inputs = config_inputs(cfg);
  ExperimentSummary s;
  staged(out, [&](const fs::path& dir) {
    const auto ds = load_datasets(cfg);
    const auto model = build_model(cfg, ds.train);
    const auto init = initial_params(cfg, model);
    const auto run = fl::run_rounds(model, init, ds.train, fl_config(cfg));
    s.accuracy = accuracy(model, run.final_params, ds.test);

    save_config(dir / "config.json", cfg);
    for (const auto& log : run.logs) {
      fl::save_round_log(dir / "rounds" / round_dir_name(log.round), log);
      if (opts.simulate_only) continue;
      const std::size_t n = std::min(cfg.attack.clients, log.clients.size());
      for (std::size_t c = 0; c < n; ++c) {
        s.attacks.push_back(attack_client(cfg, model, ds.train, log, log.clients[c], opts.full));
        write_attack(dir / "attacks" / attack_dir_name(log.round, log.clients[c].client), s.attacks.back(),
                     cfg.metrics.dump_images);
      }
    }
    summarize(s);
    write_reports(dir, s, s.accuracy);
    write_manifest(dir, config_to_json(cfg), inputs);
  });
  return s;
}

ExperimentSummary attack_round_log(const ExperimentConfig& cfg, const fs::path& round_dir, const fs::path& out,
                                   const RunOptions& opts) {
  validate(cfg);
  auto inputs = config_inputs(cfg);
  const auto log = fl::load_round_log(round_dir);
  inputs.push_back({"round-log", digest::git_blob_sha1(digest::read_file(round_dir / "manifest.json"))});
  ExperimentSummary s;
  staged(out, [&](const fs::path& dir) {
    const auto ds = load_datasets(cfg);
    const auto model = build_model(cfg, ds.train);
    if (!(model.layout() == log.aggregated.layout())) throw data::DataError("round log does not match the configured model");
    for (const auto& rec : log.clients)
      for (std::size_t i : rec.truth_indices)
        if (i >= ds.train.size()) throw data::DataError("round log refers to samples outside the dataset");
    save_config(dir / "config.json", cfg);
    const std::size_t n = std::min(cfg.attack.clients, log.clients.size());
    for (std::size_t c = 0; c < n; ++c) {
      s.attacks.push_back(attack_client(cfg, model, ds.train, log, log.clients[c], opts.full));
      write_attack(dir / "attacks" / attack_dir_name(log.round, log.clients[c].client), s.attacks.back(),
                   cfg.metrics.dump_images);
    }
    summarize(s);
    write_reports(dir, s, std::nullopt);
    write_manifest(dir, config_to_json(cfg), inputs);
  });
  return s;
}

metrics::MetricsReport evaluate_files(const fs::path& recon, const fs::path& truth, const fs::path& out,
                                      bool exclusive) {
  const Tensor r = io::load_tensor(recon), t = io::load_tensor(truth);
  if (r.rank() != 4 || t.rank() != 4) throw data::DataError("expected [B,C,H,W] tensors");
  if (!std::equal(r.shape().begin() + 1, r.shape().end(), t.shape().begin() + 1, t.shape().end())) {
    throw data::DataError("reconstruction and truth images differ in shape");
  }
  metrics::MetricsReport rep;
  const std::vector<Input> inputs{{recon.string(), digest::git_blob_sha1(digest::read_file(recon))},
                                  {truth.string(), digest::git_blob_sha1(digest::read_file(truth))}};
  staged(out, [&](const fs::path& dir) {
    rep = metrics::evaluate(r, t, exclusive);
    std::string csv = "truth,matched,psnr,ssim\r\n";
    for (const auto& im : rep.images) {
      csv += std::to_string(im.truth) + ',' + std::to_string(im.matched) + ',' + format_number(im.psnr) + ',' +
             format_number(im.ssim) + "\r\n";
    }
    write_text(dir / "metrics.csv", csv);
    const json j = {{"psnr_mean", rep.psnr_mean},
                    {"psnr_median", rep.psnr_median},
                    {"ssim_mean", rep.ssim_mean},
                    {"ssim_median", rep.ssim_median},
                    {"exclusive_matching", exclusive}};
    write_text(dir / "metrics.json", j.dump(2) + "\n");
    write_manifest(dir, json::object(), inputs);
  });
  return rep;
}

std::vector<SweepRow> sweep(const ExperimentConfig& cfg, const std::string& axis, const std::vector<json>& values,
                            const fs::path& out, std::size_t parallel, const RunOptions& opts) {
  if (values.empty()) throw ConfigError("sweep needs at least one value");
  std::vector<SweepRow> rows(values.size());
  std::vector<ExperimentConfig> subs;
  std::vector<fs::path> dirs;
  for (std::size_t i = 0; i < values.size(); ++i) {
    rows[i].value = values[i];
    subs.push_back(with_value(cfg, axis, values[i]));
    std::string tag = values[i].dump();
    for (char& c : tag)
      if (!std::isalnum(static_cast<unsigned char>(c)) && c != '.' && c != '-') c = '_';
    char buf[16];
    std::snprintf(buf, sizeof buf, "%02zu_", i);
    dirs.push_back(out / (buf + tag));
  }
  fs::create_directories(out);

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < values.size(); i = next++) {
      try {
        const auto s = run_experiment(subs[i], dirs[i], opts);
        rows[i].ok = true;
        rows[i].accuracy = s.accuracy;
        rows[i].psnr = s.psnr_mean;
        rows[i].ssim = s.ssim_mean;
      } catch (const std::exception& e) {
        rows[i].error = e.what();
      }
    }
  };
  const std::size_t n = std::clamp<std::size_t>(parallel, 1, values.size());
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  std::string csv = "value,accuracy,psnr,ssim,status\r\n";
  for (const auto& r : rows) {
    csv += csv_field(r.value.is_string() ? r.value.get<std::string>() : r.value.dump()) + ',';
    csv += r.ok ? format_number(r.accuracy) + ',' + format_number(r.psnr) + ',' + format_number(r.ssim) + ",ok"
                : ",,," + csv_field("error: " + r.error);
    csv += "\r\n";
  }
  write_text(out / "sweep.csv", csv);
  json cfgj = config_to_json(cfg);
  cfgj["sweep"] = {{"axis", axis}, {"values", values}};
  write_manifest(out, cfgj, config_inputs(cfg));
  return rows;
}

Suite parse_suite(const std::string& s) {
  for (Suite x : {Suite::MuL, Suite::Fisher, Suite::Uniqueness, Suite::MinRemoval})
    if (suite_name(x) == s) return x;
  throw ConfigError("unknown diagnostic suite '" + s + "'");
}

std::string suite_name(Suite s) {
  switch (s) {
    case Suite::MuL: return "mu-l";
    case Suite::Fisher: return "fisher";
    case Suite::Uniqueness: return "uniqueness";
    case Suite::MinRemoval: return "min-removal";
  }
  return "?";
}

json diagnose(const ExperimentConfig& cfg, const std::vector<Suite>& suites, const fs::path& out,
              const RunOptions& opts) {
  validate(cfg);
  const auto inputs = config_inputs(cfg);
  json result = json::object();
  staged(out, [&](const fs::path& dir) {
    const auto ds = load_datasets(cfg);
    const auto model = build_model(cfg, ds.train);
    const auto params = initial_params(cfg, model);
    for (Suite suite : suites) {
      json j;
      switch (suite) {
        case Suite::MuL: {
          // Paired runs on the first logged client of round 0.
          auto fc = fl_config(cfg);
          fc.rounds = 1;
          fc.attack_rounds = {0};
          const auto run = fl::run_rounds(model, params, ds.train, fc);
          const auto& log = run.logs.front();
          for (auto method : {attack::Method::FedLeak, attack::Method::L2}) {
            ExperimentConfig c = cfg;
            c.attack.core.method = method;
            const auto o = attack_client(c, model, ds.train, log, log.clients.front(), opts.full);
            std::vector<double> ratios;
            for (const auto& r : o.trace.rows)
              if (r.two_mu_over_L) ratios.push_back(*r.two_mu_over_L);
            j[attack::method_name(method)] = {{"two_mu_over_L_median", median_of(ratios)},
                                              {"recorded", ratios.size()},
                                              {"psnr_mean", o.report.psnr_mean}};
          }
          break;
        }
        case Suite::Fisher: {
          std::vector<std::size_t> idx(std::min<std::size_t>(8, ds.train.size()));
          std::iota(idx.begin(), idx.end(), std::size_t{0});
          const auto rep = metrics::fisher_correlation(model, params, ds.train.batch(idx), ds.train.batch_labels(idx),
                                                       256, derive_seed(cfg.seed, "fisher"));
          j = {{"mean", rep.mean}, {"stdev", rep.stdev}, {"per_sample", rep.per_sample}, {"elements", rep.elements}};
          break;
        }
        case Suite::Uniqueness: {
          const std::vector<std::size_t> one{0};
          const Tensor x = ds.train.batch(one).reshaped(nn::batch_input_shape(model, 1));
          const auto lab = ds.train.batch_labels(one);
          const auto seed = derive_seed(cfg.seed, "uniqueness");
          const auto live = metrics::uniqueness_probe(model, params, x, lab, 1000, 0.1, seed);
          const auto dead = metrics::uniqueness_probe(model, nn::ParameterSet::zeros(model.layout()), x, lab, 100, 0.1, seed);
          j = {{"trials", live.trials},
               {"collisions", live.collisions},
               {"min_distance", live.min_distance},
               {"sanity_distance", live.sanity_distance},
               {"zero_weight_trials", dead.trials},
               {"zero_weight_collisions", dead.collisions}};
          break;
        }
        case Suite::MinRemoval: {
          Rng rng(derive_seed(cfg.seed, "min-removal"));
          std::size_t violations = 0, strict = 0;
          for (int t = 0; t < 1000; ++t) {
            std::vector<double> v(2 + rng.below(30));
            for (double& e : v) e = rng.uniform(-1, 1);
            const auto verdict = metrics::min_removal_check(v);
            violations += !verdict.holds;
            strict += verdict.strict_expected;
          }
          j = {{"multisets", 1000}, {"violations", violations}, {"strict_cases", strict}};
          break;
        }
      }
      result[suite_name(suite)] = j;
    }
    write_text(dir / "diagnostics.json", result.dump(2) + "\n");
    write_manifest(dir, config_to_json(cfg), inputs);
  });
  return result;
}

}  // namespace gleak::harness
