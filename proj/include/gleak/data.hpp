#pragma once
// Labeled image collections: IDX ingestion, synthetic generators with
// controllable smoothness, and 8-bit PGM/PPM dumps for inspection.

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "gleak/tensor.hpp"

namespace gleak::data {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Dataset {
  Tensor images;  // [n, C, H, W], values in [0, 1]
  std::vector<int> labels;
  std::size_t classes = 0;

  std::size_t size() const { return labels.size(); }
  Shape sample_shape() const { return Shape(images.shape().begin() + 1, images.shape().end()); }
  Tensor sample(std::size_t i) const;
  Tensor batch(const std::vector<std::size_t>& indices) const;  // [B, C, H, W]
  std::vector<int> batch_labels(const std::vector<std::size_t>& indices) const;
  Dataset subset(const std::vector<std::size_t>& indices) const;
};

// Images with magic 0x00000803 ([n, rows, cols] u8), labels with 0x00000801.
// `limit` keeps the first n samples when nonzero.
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 std::size_t limit = 0);

enum class SynthKind { Blobs, Stripes, Texture };
SynthKind parse_synth_kind(const std::string& s);
std::string synth_kind_name(SynthKind k);

// Class-conditional images. Blobs are smooth (low TV), stripes are high-TV,
// texture sits in between. Label i is i % classes.
Dataset synth_dataset(SynthKind kind, std::size_t n, const Shape& sample_shape, std::size_t classes,
                      std::uint64_t seed);

// Anisotropic total variation of one [C, H, W] image: sum of absolute forward
// differences along H and W.
double image_tv(const Tensor& image);

// [C, H, W] with C == 1 (PGM) or C == 3 (PPM), values clamped to [0,1].
void write_pnm(const std::filesystem::path& path, const Tensor& image);

}  // namespace gleak::data
