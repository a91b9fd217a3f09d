#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "gleak/config.hpp"

namespace gleak::harness {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw ConfigError("field '" + path + "': " + what);
}

bool is_count(const json& v) {
  return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
}

// Walks one JSON object, converting known keys and rejecting the rest.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_.empty() ? "<root>" : path_, "expected an object");
  }

  std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const json* find(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  void get(const std::string& key, std::uint64_t& out) {
    if (const json* v = find(key)) {
      if (!is_count(*v)) fail(at(key), "expected a non-negative integer");
      out = v->get<std::uint64_t>();
    }
  }
  void get(const std::string& key, int& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_integer()) fail(at(key), "expected an integer");
      out = v->get<int>();
    }
  }
  void get(const std::string& key, double& out) {
    if (const json* v = find(key)) {
      if (!v->is_number()) fail(at(key), "expected a number");
      out = v->get<double>();
    }
  }
  void get(const std::string& key, bool& out) {
    if (const json* v = find(key)) {
      if (!v->is_boolean()) fail(at(key), "expected true or false");
      out = v->get<bool>();
    }
  }
  void get(const std::string& key, std::string& out) {
    if (const json* v = find(key)) {
      if (!v->is_string()) fail(at(key), "expected a string");
      out = v->get<std::string>();
    }
  }
  void get(const std::string& key, std::vector<std::size_t>& out) {
    if (const json* v = find(key)) {
      if (!v->is_array()) fail(at(key), "expected an array of non-negative integers");
      out.clear();
      for (const auto& e : *v) {
        if (!is_count(e)) fail(at(key), "expected an array of non-negative integers");
        out.push_back(e.get<std::size_t>());
      }
    }
  }
  void get(const std::string& key, std::vector<double>& out) {
    if (const json* v = find(key)) {
      if (!v->is_array()) fail(at(key), "expected an array of numbers");
      out.clear();
      for (const auto& e : *v) {
        if (!e.is_number()) fail(at(key), "expected an array of numbers");
        out.push_back(e.get<double>());
      }
    }
  }
  template <class E, class Parse>
  void get_enum(const std::string& key, E& out, Parse parse) {
    std::string s;
    get(key, s);
    if (!has(key)) return;
    try {
      out = parse(s);
    } catch (const std::invalid_argument& e) {
      fail(at(key), e.what());
    }
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError("unknown key '" + at(it.key()) + "'");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

defense::Band parse_band(const std::string& s) {
  if (s == "top") return defense::Band::Top;
  if (s == "bottom") return defense::Band::Bottom;
  throw std::invalid_argument("expected 'top' or 'bottom'");
}

defense::Attach parse_attach(const std::string& s) {
  if (s == "per-step") return defense::Attach::PerStep;
  if (s == "per-round") return defense::Attach::PerRound;
  throw std::invalid_argument("expected 'per-step' or 'per-round'");
}

// 1-based line and column of a byte offset.
std::pair<std::size_t, std::size_t> line_col(const std::string& text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

}  // namespace

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  Reader root(j, "");

  const json* ds = root.find("dataset");
  if (!ds) throw ConfigError("field 'dataset': required");
  {
    Reader r(*ds, "dataset");
    r.get("source", c.dataset.source);
    if (!r.has("source")) fail("dataset.source", "required");
    r.get_enum("kind", c.dataset.kind, data::parse_synth_kind);
    r.get("n", c.dataset.n);
    r.get("shape", c.dataset.shape);
    r.get("classes", c.dataset.classes);
    r.get("test_n", c.dataset.test_n);
    r.get("images", c.dataset.images);
    r.get("labels", c.dataset.labels);
    r.get("limit", c.dataset.limit);
    r.finish();
  }

  const json* md = root.find("model");
  if (!md) throw ConfigError("field 'model': required");
  {
    Reader r(*md, "model");
    r.get("name", c.model.name);
    if (!r.has("name")) fail("model.name", "required");
    r.get("hidden", c.model.hidden);
    r.get("init", c.model.init);
    r.get("low", c.model.low);
    r.get("high", c.model.high);
    r.get("path", c.model.path);
    r.finish();
  }

  if (const json* f = root.find("fl")) {
    Reader r(*f, "fl");
    r.get("clients", c.fl.clients);
    r.get("rounds", c.fl.rounds);
    r.get("participants", c.fl.participants);
    r.get("batch_size", c.fl.batch_size);
    r.get("local_steps", c.fl.local_steps);
    r.get("lr", c.fl.lr);
    if (const json* p = r.find("partition")) {
      Reader q(*p, "fl.partition");
      q.get_enum("mode", c.fl.partition.mode, fl::parse_partition_mode);
      q.get("classes_per_client", c.fl.partition.classes_per_client);
      q.get("sizes", c.fl.partition.sizes);
      q.get("tv_groups", c.fl.partition.tv_groups);
      q.get("alpha", c.fl.partition.alpha);
      q.finish();
    }
    r.finish();
  }
  c.fl.partition.clients = c.fl.clients;

  if (const json* d = root.find("defense")) {
    Reader r(*d, "defense");
    r.get_enum("kind", c.defense.kind, defense::parse_kind);
    r.get("epsilon", c.defense.epsilon);
    r.get("delta", c.defense.delta);
    r.get("clip", c.defense.clip);
    r.get("keep", c.defense.keep);
    r.get("bits", c.defense.bits);
    r.get_enum("band", c.defense.band, parse_band);
    r.get("fraction", c.defense.fraction);
    r.get_enum("attach", c.defense.attach, parse_attach);
    r.get("sigma_decay", c.defense.sigma_decay);
    r.finish();
  }

  if (const json* a = root.find("attack")) {
    Reader r(*a, "attack");
    auto& k = c.attack.core;
    r.get_enum("method", k.method, attack::parse_method);
    r.get("eta", k.eta);
    r.get("iterations", k.iterations);
    r.get("lambda", k.lambda);
    r.get("k", k.k);
    r.get("R", k.R);
    r.get("alpha", k.alpha);
    r.get("beta", k.beta);
    r.get("restarts", k.restarts);
    r.get_enum("schedule", k.schedule, attack::parse_schedule);
    r.get("period", k.period);
    r.get("refine_labels", k.refine_labels);
    r.get_enum("probe", k.probe, attack::parse_probe);
    r.get("labels", c.attack.labels);
    r.get("clients", c.attack.clients);
    r.finish();
  }

  root.get("attack_rounds", c.attack_rounds);

  if (const json* m = root.find("metrics")) {
    Reader r(*m, "metrics");
    r.get("exclusive_matching", c.metrics.exclusive_matching);
    r.get("dump_images", c.metrics.dump_images);
    r.finish();
  }

  root.get("output", c.output);
  root.get("seed", c.seed);
  root.finish();
  validate(c);
  return c;
}

void validate(const ExperimentConfig& c) {
  const auto& d = c.dataset;
  if (d.source == "synthetic") {
    if (d.shape.size() != 3) fail("dataset.shape", "expected [C,H,W]");
    if (d.classes == 0) fail("dataset.classes", "must be >= 1");
    if (d.n < d.classes) fail("dataset.n", "must be >= classes");
  } else if (d.source == "idx") {
    if (d.images.empty()) fail("dataset.images", "required for idx");
    if (d.labels.empty()) fail("dataset.labels", "required for idx");
  } else {
    fail("dataset.source", "expected 'synthetic' or 'idx'");
  }

  static const std::set<std::string> models{"linear", "mlp2", "mlp3", "convnet", "resnet-mini"};
  if (!models.count(c.model.name)) fail("model.name", "unknown model '" + c.model.name + "'");
  if (c.model.init == "wide-uniform") {
    if (!(c.model.low < c.model.high)) fail("model.low", "must be below model.high");
  } else if (c.model.init == "file") {
    if (c.model.path.empty()) fail("model.path", "required for file init");
  } else if (c.model.init != "default") {
    fail("model.init", "expected 'default', 'wide-uniform' or 'file'");
  }

  const auto& f = c.fl;
  if (f.clients == 0) fail("fl.clients", "must be >= 1");
  if (f.rounds == 0) fail("fl.rounds", "must be >= 1");
  if (f.participants > f.clients) fail("fl.participants", "exceeds fl.clients");
  if (f.batch_size == 0) fail("fl.batch_size", "must be >= 1");
  if (f.local_steps == 0) fail("fl.local_steps", "must be >= 1");
  if (!(f.lr > 0)) fail("fl.lr", "must be > 0");
  for (std::size_t r : c.attack_rounds) {
    if (r >= f.rounds) fail("attack_rounds", "round " + std::to_string(r) + " outside [0, " + std::to_string(f.rounds) + ")");
  }

  try {
    c.defense.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("field 'defense': ") + e.what());
  }
  try {
    c.attack.core.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("field 'attack': ") + e.what());
  }
  if (c.attack.labels != "infer" && c.attack.labels != "truth") fail("attack.labels", "expected 'infer' or 'truth'");
  if (c.output.empty()) fail("output", "must not be empty");
}

json config_to_json(const ExperimentConfig& c) {
  const auto& k = c.attack.core;
  const auto& p = c.fl.partition;
  json j;
  j["dataset"] = {{"source", c.dataset.source},
                  {"kind", data::synth_kind_name(c.dataset.kind)},
                  {"n", c.dataset.n},
                  {"shape", c.dataset.shape},
                  {"classes", c.dataset.classes},
                  {"test_n", c.dataset.test_n},
                  {"images", c.dataset.images},
                  {"labels", c.dataset.labels},
                  {"limit", c.dataset.limit}};
  j["model"] = {{"name", c.model.name}, {"hidden", c.model.hidden}, {"init", c.model.init},
                {"low", c.model.low},   {"high", c.model.high},     {"path", c.model.path}};
  j["fl"] = {{"clients", c.fl.clients},
             {"rounds", c.fl.rounds},
             {"participants", c.fl.participants},
             {"batch_size", c.fl.batch_size},
             {"local_steps", c.fl.local_steps},
             {"lr", c.fl.lr},
             {"partition",
              {{"mode", fl::partition_mode_name(p.mode)},
               {"classes_per_client", p.classes_per_client},
               {"sizes", p.sizes},
               {"tv_groups", p.tv_groups},
               {"alpha", p.alpha}}}};
  j["defense"] = {{"kind", defense::kind_name(c.defense.kind)},
                  {"epsilon", c.defense.epsilon},
                  {"delta", c.defense.delta},
                  {"clip", c.defense.clip},
                  {"keep", c.defense.keep},
                  {"bits", c.defense.bits},
                  {"band", c.defense.band == defense::Band::Top ? "top" : "bottom"},
                  {"fraction", c.defense.fraction},
                  {"attach", c.defense.attach == defense::Attach::PerStep ? "per-step" : "per-round"},
                  {"sigma_decay", c.defense.sigma_decay}};
  j["attack"] = {{"method", attack::method_name(k.method)},
                 {"eta", k.eta},
                 {"iterations", k.iterations},
                 {"lambda", k.lambda},
                 {"k", k.k},
                 {"R", k.R},
                 {"alpha", k.alpha},
                 {"beta", k.beta},
                 {"restarts", k.restarts},
                 {"schedule", attack::schedule_name(k.schedule)},
                 {"period", k.period},
                 {"refine_labels", k.refine_labels},
                 {"probe", attack::probe_name(k.probe)},
                 {"labels", c.attack.labels},
                 {"clients", c.attack.clients}};
  j["attack_rounds"] = c.attack_rounds;
  j["metrics"] = {{"exclusive_matching", c.metrics.exclusive_matching}, {"dump_images", c.metrics.dump_images}};
  j["output"] = c.output;
  j["seed"] = c.seed;
  return j;
}

ExperimentConfig parse_config(const std::string& text, const std::string& origin) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    const auto [line, col] = line_col(text, e.byte == 0 ? 0 : e.byte - 1);
    std::ostringstream msg;
    msg << origin << ":" << line << ":" << col << ": " << e.what();
    throw ConfigError(msg.str());
  }
  try {
    return config_from_json(j);
  } catch (const ConfigError& e) {
    throw ConfigError(origin + ": " + e.what());
  }
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string());
}

void save_config(const std::filesystem::path& path, const ExperimentConfig& cfg) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << config_to_json(cfg).dump(2) << "\n";
}

ExperimentConfig with_value(const ExperimentConfig& cfg, const std::string& path, const json& value) {
  json j = config_to_json(cfg);
  json* node = &j;
  std::stringstream ss(path);
  std::string part;
  while (std::getline(ss, part, '.')) {
    if (!node->is_object() || !node->contains(part)) throw ConfigError("unknown config path '" + path + "'");
    node = &(*node)[part];
  }
  if (node == &j) throw ConfigError("empty config path");
  *node = value;
  return config_from_json(j);
}

}  // namespace gleak::harness
