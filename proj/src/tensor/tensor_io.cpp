#include "gleak/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace gleak::io {
namespace {

constexpr char kMagic[4] = {'G', 'L', 'T', '1'};

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFFu);
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_f64(std::ostream& os, double d) {
  const auto v = std::bit_cast<std::uint64_t>(d);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFFu);
  os.write(reinterpret_cast<const char*>(b), 8);
}

void read_exact(std::istream& is, unsigned char* dst, std::size_t n, const char* what) {
  is.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(is.gcount()) != n) {
    throw FormatError(std::string("GLT1: truncated ") + what);
  }
}

std::uint32_t get_u32(std::istream& is, const char* what) {
  unsigned char b[4];
  read_exact(is, b, 4, what);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace

void write_tensor(std::ostream& os, const Tensor& t) {
  os.write(kMagic, 4);
  put_u32(os, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d : t.shape()) put_u32(os, static_cast<std::uint32_t>(d));
  for (double v : t.data()) put_f64(os, v);
}

Tensor read_tensor(std::istream& is) {
  unsigned char magic[4];
  read_exact(is, magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError("GLT1: bad magic bytes");
  const std::uint32_t rank = get_u32(is, "rank");
  if (rank > 16) throw FormatError("GLT1: implausible rank " + std::to_string(rank));
  Shape shape(rank);
  for (auto& d : shape) d = get_u32(is, "extents");
  const std::size_t n = shape_numel(shape);
  std::vector<double> data(n);
  std::vector<unsigned char> buf(n * 8);
  read_exact(is, buf.data(), buf.size(), "payload");
  for (std::size_t i = 0; i < n; ++i) {
    std::uint64_t v = 0;
    for (int b = 0; b < 8; ++b) v |= static_cast<std::uint64_t>(buf[i * 8 + b]) << (8 * b);
    data[i] = std::bit_cast<double>(v);
  }
  return Tensor(std::move(shape), std::move(data));
}

std::vector<std::uint8_t> encode_tensor(const Tensor& t) {
  std::ostringstream os(std::ios::binary);
  write_tensor(os, t);
  const std::string s = os.str();
  return {s.begin(), s.end()};
}

Tensor decode_tensor(const std::vector<std::uint8_t>& bytes) {
  std::istringstream is(std::string(bytes.begin(), bytes.end()), std::ios::binary);
  return read_tensor(is);
}

void save_tensor(const std::filesystem::path& path, const Tensor& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_tensor(os, t);
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

Tensor load_tensor(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  return read_tensor(is);
}

}  // namespace gleak::io
