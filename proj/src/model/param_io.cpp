#include <fstream>
#include <sstream>

#include <json.hpp>

#include "gleak/model.hpp"
#include "gleak/tensor_io.hpp"

namespace gleak::nn {

void save_parameters(const std::filesystem::path& path, const ParameterSet& params) {
  nlohmann::json manifest;
  manifest["format"] = "gleak-params";
  manifest["version"] = 1;
  manifest["entries"] = nlohmann::json::array();
  std::string payload;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& e = params.layout().entries[i];
    const auto bytes = io::encode_tensor(params.at(i));
    manifest["entries"].push_back(
        {{"name", e.name}, {"shape", e.shape}, {"offset", payload.size()}, {"bytes", bytes.size()}});
    payload.append(bytes.begin(), bytes.end());
  }
  const std::string m = manifest.dump();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  std::uint64_t len = m.size();
  unsigned char lb[8];
  for (int i = 0; i < 8; ++i) lb[i] = static_cast<unsigned char>((len >> (8 * i)) & 0xFFu);
  os.write(reinterpret_cast<const char*>(lb), 8);
  os.write(m.data(), static_cast<std::streamsize>(m.size()));
  os.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

ParameterSet load_parameters(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open parameter file " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  const std::string all = ss.str();
  if (all.size() < 8) throw io::FormatError("parameter file truncated: " + path.string());
  std::uint64_t len = 0;
  for (int i = 0; i < 8; ++i) len |= static_cast<std::uint64_t>(static_cast<unsigned char>(all[i])) << (8 * i);
  if (len > all.size() - 8) throw io::FormatError("parameter manifest truncated");
  const auto manifest = nlohmann::json::parse(all.substr(8, len));
  if (manifest.value("format", "") != "gleak-params") {
    throw io::FormatError("not a gleak parameter file: " + path.string());
  }
  const std::size_t base = 8 + len;
  std::vector<std::pair<std::string, Shape>> shapes;
  std::vector<Tensor> tensors;
  for (const auto& e : manifest.at("entries")) {
    const std::size_t off = e.at("offset").get<std::size_t>();
    const std::size_t n = e.at("bytes").get<std::size_t>();
    if (base + off + n > all.size()) throw io::FormatError("parameter payload truncated");
    std::vector<std::uint8_t> bytes(all.begin() + static_cast<long>(base + off),
                                    all.begin() + static_cast<long>(base + off + n));
    Tensor t = io::decode_tensor(bytes);
    const Shape shape = e.at("shape").get<Shape>();
    if (t.shape() != shape) throw io::FormatError("manifest shape disagrees with tensor record");
    shapes.emplace_back(e.at("name").get<std::string>(), shape);
    tensors.push_back(std::move(t));
  }
  return ParameterSet(ParamLayout::from_shapes(shapes), std::move(tensors));
}

}  // namespace gleak::nn
