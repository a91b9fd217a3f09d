#include <cstdio>
#include <fstream>
#include <json.hpp>

#include "gleak/data.hpp"
#include "gleak/fl.hpp"
#include "gleak/tensor_io.hpp"

namespace gleak::fl {
namespace {

using nlohmann::json;

void put(const std::filesystem::path& dir, const std::string& file, const nn::ParameterSet& p) {
  io::save_tensor(dir / file, p.flatten());
}

nn::ParameterSet get(const std::filesystem::path& dir, const json& name, const nn::ParamLayout& layout) {
  const Tensor flat = io::load_tensor(dir / name.get<std::string>());
  if (flat.size() != layout.total) throw io::FormatError("round log tensor does not match layout");
  return nn::ParameterSet::unflatten(layout, flat);
}

std::string client_file(std::size_t client, const char* what) {
  char b[64];
  std::snprintf(b, sizeof b, "client_%04zu_%s.glt", client, what);
  return b;
}

}  // namespace

void save_round_log(const std::filesystem::path& dir, const RoundLog& log) {
  std::filesystem::create_directories(dir);
  json layout = json::array();
  for (const auto& e : log.aggregated.layout().entries) layout.push_back({{"name", e.name}, {"shape", e.shape}});
  json clients = json::array();
  for (const auto& c : log.clients) {
    json entry{{"client", c.client},
               {"w_old", client_file(c.client, "w_old")},
               {"w_new", client_file(c.client, "w_new")},
               {"g_hat", client_file(c.client, "g_hat")},
               {"truth_indices", c.truth_indices}};
    put(dir, entry["w_old"], c.w_old);
    put(dir, entry["w_new"], c.w_new);
    put(dir, entry["g_hat"], c.g_hat);
    clients.push_back(std::move(entry));
  }
  put(dir, "aggregated.glt", log.aggregated);
  const json manifest{{"format", "gleak-round-log"}, {"version", 1},
                      {"round", log.round},          {"lr", log.lr},
                      {"steps", log.steps},          {"batch_size", log.batch_size},
                      {"participants", log.participants},
                      {"layout", layout},            {"aggregated", "aggregated.glt"},
                      {"clients", clients}};
  std::ofstream(dir / "manifest.json") << manifest.dump(2) << "\n";
}

RoundLog load_round_log(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw data::DataError("no manifest.json in " + dir.string());
  json m;
  try {
    m = json::parse(in);
    if (m.at("format") != "gleak-round-log") throw data::DataError("not a round log: " + dir.string());
    std::vector<std::pair<std::string, Shape>> shapes;
    for (const auto& e : m.at("layout")) shapes.emplace_back(e.at("name"), e.at("shape").get<Shape>());
    const auto layout = nn::ParamLayout::from_shapes(shapes);
    RoundLog log;
    log.round = m.at("round");
    log.lr = m.at("lr");
    log.steps = m.at("steps");
    log.batch_size = m.at("batch_size");
    log.participants = m.at("participants").get<std::vector<std::size_t>>();
    log.aggregated = get(dir, m.at("aggregated"), layout);
    for (const auto& c : m.at("clients")) {
      log.clients.push_back({c.at("client"), get(dir, c.at("w_old"), layout), get(dir, c.at("w_new"), layout),
                             get(dir, c.at("g_hat"), layout),
                             c.at("truth_indices").get<std::vector<std::size_t>>()});
    }
    return log;
  } catch (const json::exception& e) {
    throw data::DataError("malformed round log manifest in " + dir.string() + ": " + e.what());
  }
}

}  // namespace gleak::fl
