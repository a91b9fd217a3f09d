#pragma once
// Content hashes for run manifests.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace gleak::digest {

std::string sha256_hex(std::string_view bytes);
// SHA-1 of "blob <size>\0" followed by the bytes, as git computes object ids.
std::string git_blob_sha1(std::string_view bytes);

std::string read_file(const std::filesystem::path& path);  // std::runtime_error on failure

}  // namespace gleak::digest
