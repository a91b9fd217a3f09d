#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "gleak/config.hpp"
#include "gleak/digest.hpp"
#include "gleak/experiment.hpp"

namespace gleak::harness {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

const char* kMinimal = R"({"dataset": {"source": "synthetic"}, "model": {"name": "mlp2"}})";

std::string error_of(const std::string& text) {
  try {
    parse_config(text, "cfg.json");
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

TEST(Config, MinimalDefaults) {
  const auto c = parse_config(kMinimal);
  EXPECT_EQ(c.dataset.source, "synthetic");
  EXPECT_EQ(c.model.name, "mlp2");
  EXPECT_DOUBLE_EQ(c.attack.core.eta, 1e-4);
  EXPECT_EQ(c.attack.core.iterations, 10000u);
  EXPECT_DOUBLE_EQ(c.attack.core.lambda, 0.7);
  EXPECT_DOUBLE_EQ(c.attack.core.R, 50.0);
  EXPECT_EQ(c.attack_rounds, std::vector<std::size_t>{0});
  EXPECT_EQ(c.fl.batch_size, 1u);
  EXPECT_EQ(c.seed, 0u);
}

TEST(Config, UnknownKeyRejected) {
  const auto e = error_of(R"({"dataset": {"source": "synthetic", "nn": 3}, "model": {"name": "mlp2"}})");
  EXPECT_NE(e.find("unknown key 'dataset.nn'"), std::string::npos) << e;
  EXPECT_NE(error_of(R"({"dataset": {"source": "synthetic"}, "model": {"name": "mlp2"}, "x": 1})"), "");
}

TEST(Config, SyntaxErrorNamesLine) {
  const auto e = error_of("{\n  \"dataset\": {\"source\": \"synthetic\"},\n  \"model\": {\"name\": \"mlp2\",}\n}");
  EXPECT_NE(e.find("cfg.json:3:"), std::string::npos) << e;
}

TEST(Config, TypeErrorNamesField) {
  const auto e = error_of(R"({"dataset": {"source": "synthetic"}, "model": {"name": "mlp2"}, "attack": {"eta": "big"}})");
  EXPECT_NE(e.find("attack.eta"), std::string::npos) << e;
  EXPECT_NE(error_of(R"({"dataset": {"source": "synthetic", "n": -3}, "model": {"name": "mlp2"}})"), "");
}

TEST(Config, RequiredFields) {
  EXPECT_NE(error_of(R"({"model": {"name": "mlp2"}})"), "");
  EXPECT_NE(error_of(R"({"dataset": {"source": "synthetic"}, "model": {}})"), "");
}

TEST(Config, ValidateRejectsOutOfRange) {
  auto c = parse_config(kMinimal);
  c.attack_rounds = {1};
  EXPECT_THROW(validate(c), ConfigError);
  c = parse_config(kMinimal);
  c.model.name = "vgg";
  EXPECT_THROW(validate(c), ConfigError);
  c = parse_config(kMinimal);
  c.attack.core.R = 0.0;
  EXPECT_THROW(validate(c), ConfigError);
  c = parse_config(kMinimal);
  c.attack.labels = "guess";
  EXPECT_THROW(validate(c), ConfigError);
  c = parse_config(kMinimal);
  c.dataset.source = "idx";
  EXPECT_THROW(validate(c), ConfigError);
}

TEST(Config, RoundTrip) {
  auto c = parse_config(kMinimal);
  c.attack.core.eta = 1e-3;
  c.attack.core.method = attack::Method::L2;
  c.defense.kind = defense::Kind::Sparsify;
  c.defense.keep = 0.3;
  c.fl.partition.mode = fl::PartitionMode::Dirichlet;
  c.fl.partition.alpha = 0.5;
  c.seed = 0xFFFFFFFFFFFFFFFFull;
  EXPECT_EQ(config_from_json(config_to_json(c)), c);
  EXPECT_EQ(parse_config(config_to_json(c).dump()), c);
}

TEST(Config, WithValue) {
  const auto c = parse_config(kMinimal);
  EXPECT_DOUBLE_EQ(with_value(c, "attack.R", 20).attack.core.R, 20.0);
  EXPECT_EQ(with_value(c, "defense.kind", "gaussian-dp").defense.kind, defense::Kind::GaussianDp);
  EXPECT_THROW(with_value(c, "attack.RR", 20), ConfigError);
  EXPECT_THROW(with_value(c, "attack.eta", "x"), ConfigError);
}

TEST(Digest, KnownVectors) {
  EXPECT_EQ(digest::sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_EQ(digest::git_blob_sha1(""), "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
  EXPECT_EQ(digest::git_blob_sha1("hello\n"), "ce013625030ba8dba906f756967f9e9ca394464a");
}

TEST(Csv, FieldQuoting) {
  EXPECT_EQ(csv_field("plain"), "plain");
  EXPECT_EQ(csv_field("a,b"), "\"a,b\"");
  EXPECT_EQ(csv_field("say \"hi\""), "\"say \"\"hi\"\"\"");
  EXPECT_EQ(csv_field("x\ny"), "\"x\ny\"");
  EXPECT_EQ(format_number(0.1), "0.1");
  EXPECT_EQ(format_number(1.0 / 3.0), "0.3333333333");
}

ExperimentConfig tiny_config() {
  auto c = parse_config(R"({
    "dataset": {"source": "synthetic", "n": 24, "shape": [1, 6, 6], "classes": 3, "test_n": 6},
    "model": {"name": "mlp2", "hidden": 8, "init": "wide-uniform"},
    "fl": {"clients": 3, "batch_size": 2},
    "attack": {"iterations": 25, "eta": 0.01, "clients": 2},
    "seed": 11})");
  return c;
}

std::string slurp(const fs::path& p) { return digest::read_file(p); }

class HarnessRun : public ::testing::Test {
 protected:
  void SetUp() override {
    root_ = fs::temp_directory_path() / ("gleak_harness_" + std::to_string(::getpid()));
    fs::remove_all(root_);
    fs::create_directories(root_);
  }
  void TearDown() override { fs::remove_all(root_); }
  fs::path root_;
};

TEST_F(HarnessRun, DeterministicOutputs) {
  const auto c = tiny_config();
  const auto a = run_experiment(c, root_ / "a");
  const auto b = run_experiment(c, root_ / "b");
  ASSERT_EQ(a.attacks.size(), 2u);
  for (const char* f : {"metrics.csv", "metrics.json", "config.json", "attacks/r0000_c0000/trace.csv"}) {
    EXPECT_EQ(slurp(root_ / "a" / f), slurp(root_ / "b" / f)) << f;
  }
  EXPECT_EQ(slurp(root_ / "a" / "manifest.json"), slurp(root_ / "b" / "manifest.json"));
}

TEST_F(HarnessRun, ManifestCoversEveryFile) {
  run_experiment(tiny_config(), root_ / "run");
  const json m = json::parse(slurp(root_ / "run" / "manifest.json"));
  std::set<std::string> listed;
  for (const auto& f : m["files"]) {
    listed.insert(f["path"].get<std::string>());
    EXPECT_EQ(f["sha256"], digest::sha256_hex(slurp(root_ / "run" / f["path"].get<std::string>())));
  }
  std::size_t on_disk = 0;
  for (const auto& e : fs::recursive_directory_iterator(root_ / "run")) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), root_ / "run").generic_string();
    if (rel == "manifest.json") continue;
    ++on_disk;
    EXPECT_TRUE(listed.count(rel)) << rel;
  }
  EXPECT_EQ(on_disk, listed.size());
  EXPECT_EQ(m["inputs"][0]["git_sha1"], digest::git_blob_sha1(config_to_json(tiny_config()).dump()));
  EXPECT_FALSE(fs::exists(root_ / "run.partial"));
}

TEST_F(HarnessRun, MetricsCsvShape) {
  run_experiment(tiny_config(), root_ / "run");
  const auto csv = slurp(root_ / "run" / "metrics.csv");
  EXPECT_EQ(csv.rfind("round,client,truth,matched,psnr,ssim\r\n", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 2 * 2);
}

TEST_F(HarnessRun, RefusesForeignOutputDir) {
  fs::create_directories(root_ / "busy");
  std::ofstream(root_ / "busy" / "keep.txt") << "x";
  EXPECT_THROW(run_experiment(tiny_config(), root_ / "busy"), ConfigError);
  EXPECT_TRUE(fs::exists(root_ / "busy" / "keep.txt"));
  run_experiment(tiny_config(), root_ / "again");
  EXPECT_NO_THROW(run_experiment(tiny_config(), root_ / "again/"));
}

TEST_F(HarnessRun, AttackFromRoundLogMatchesFullRun) {
  const auto c = tiny_config();
  const auto full = run_experiment(c, root_ / "full");
  const auto replay = attack_round_log(c, root_ / "full" / "rounds" / "round_0000", root_ / "replay");
  ASSERT_EQ(replay.attacks.size(), full.attacks.size());
  EXPECT_EQ(slurp(root_ / "full" / "attacks/r0000_c0000/trace.csv"),
            slurp(root_ / "replay" / "attacks/r0000_c0000/trace.csv"));
  EXPECT_THROW(attack_round_log(c, root_ / "missing", root_ / "x"), data::DataError);
}

TEST_F(HarnessRun, EvaluateFiles) {
  run_experiment(tiny_config(), root_ / "run");
  const auto dir = root_ / "run" / "attacks/r0000_c0000";
  const auto rep = evaluate_files(dir / "recon.glt", dir / "truth.glt", root_ / "eval", false);
  EXPECT_EQ(rep.images.size(), 2u);
  const auto self = evaluate_files(dir / "truth.glt", dir / "truth.glt", root_ / "self", true);
  for (const auto& im : self.images) EXPECT_EQ(im.matched, im.truth);
}

TEST_F(HarnessRun, SweepContinuesPastFailure) {
  auto c = tiny_config();
  c.attack.clients = 1;
  // A held-out set smaller than the class count only fails once data is built.
  const auto rows = sweep(c, "dataset.test_n", {json(6), json(1), json(3)}, root_ / "sweep", 2);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_TRUE(rows[0].ok);
  EXPECT_FALSE(rows[1].ok);
  EXPECT_TRUE(rows[2].ok);
  const auto csv = slurp(root_ / "sweep" / "sweep.csv");
  EXPECT_NE(csv.find("\r\n1,,,,error: field"), std::string::npos) << csv;
  EXPECT_TRUE(fs::exists(root_ / "sweep" / "manifest.json"));
  EXPECT_THROW(sweep(c, "attack.nope", {json(1)}, root_ / "bad", 1), ConfigError);
  EXPECT_THROW(sweep(c, "attack.R", {json(50), json(-5)}, root_ / "bad", 1), ConfigError);
  EXPECT_FALSE(fs::exists(root_ / "bad" / "00_50"));
}

TEST_F(HarnessRun, ExposedBandsBothRun) {
  auto c = tiny_config();
  c.model.name = "convnet";
  c.dataset.shape = {1, 8, 8};
  c.defense.kind = defense::Kind::Expose;
  c.defense.fraction = 0.2;
  for (auto band : {defense::Band::Top, defense::Band::Bottom}) {
    c.defense.band = band;
    const auto s = run_experiment(c, root_ / (band == defense::Band::Top ? "top" : "bottom"));
    EXPECT_EQ(s.attacks.size(), 2u);
  }
}

TEST_F(HarnessRun, DiagnoseWritesSuites) {
  auto c = tiny_config();
  const auto j = diagnose(c, {Suite::MinRemoval, Suite::Uniqueness}, root_ / "diag");
  EXPECT_EQ(j["min-removal"]["violations"], 0);
  EXPECT_EQ(j["uniqueness"]["collisions"], 0);
  EXPECT_TRUE(fs::exists(root_ / "diag" / "diagnostics.json"));
  EXPECT_THROW(parse_suite("nope"), ConfigError);
}

}  // namespace
}  // namespace gleak::harness
