#pragma once
// GLT1 binary tensor format:
//   "GLT1" | rank:u32 | extents:u32 x rank | payload:f64 x numel
// All integers and floats little-endian.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "gleak/tensor.hpp"

namespace gleak::io {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void write_tensor(std::ostream& os, const Tensor& t);
Tensor read_tensor(std::istream& is);

std::vector<std::uint8_t> encode_tensor(const Tensor& t);
Tensor decode_tensor(const std::vector<std::uint8_t>& bytes);

void save_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor load_tensor(const std::filesystem::path& path);

}  // namespace gleak::io
