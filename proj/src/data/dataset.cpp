#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include "gleak/data.hpp"
#include "gleak/rng.hpp"

namespace gleak::data {

Tensor Dataset::sample(std::size_t i) const { return batch({i}).reshaped(sample_shape()); }

Tensor Dataset::batch(const std::vector<std::size_t>& indices) const {
  const Shape s = sample_shape();
  const std::size_t per = shape_numel(s);
  std::vector<double> out;
  out.reserve(per * indices.size());
  for (std::size_t i : indices) {
    if (i >= size()) throw std::out_of_range("sample index out of range");
    const double* p = images.ptr() + i * per;
    out.insert(out.end(), p, p + per);
  }
  Shape shape{indices.size()};
  shape.insert(shape.end(), s.begin(), s.end());
  return Tensor(shape, std::move(out));
}

std::vector<int> Dataset::batch_labels(const std::vector<std::size_t>& indices) const {
  std::vector<int> out;
  for (std::size_t i : indices) out.push_back(labels.at(i));
  return out;
}

Dataset Dataset::subset(const std::vector<std::size_t>& indices) const {
  return {batch(indices), batch_labels(indices), classes};
}

namespace {

std::vector<unsigned char> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t be32(const std::vector<unsigned char>& b, std::size_t at) {
  if (at + 4 > b.size()) throw DataError("truncated IDX header");
  return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) |
         (std::uint32_t{b[at + 2]} << 8) | std::uint32_t{b[at + 3]};
}

}  // namespace

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 std::size_t limit) {
  const auto ib = read_all(images);
  const auto lb = read_all(labels);
  if (be32(ib, 0) != 0x00000803) throw DataError(images.string() + ": bad IDX image magic");
  if (be32(lb, 0) != 0x00000801) throw DataError(labels.string() + ": bad IDX label magic");
  const std::size_t n = be32(ib, 4), rows = be32(ib, 8), cols = be32(ib, 12);
  if (be32(lb, 4) != n) throw DataError("IDX image/label count mismatch");
  if (ib.size() < 16 + n * rows * cols) throw DataError(images.string() + ": truncated pixels");
  if (lb.size() < 8 + n) throw DataError(labels.string() + ": truncated labels");
  if (n == 0) throw DataError("IDX file holds no samples");
  const std::size_t keep = limit ? std::min(limit, n) : n;

  std::vector<double> px(keep * rows * cols);
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = ib[16 + i] / 255.0;
  Dataset d{Tensor({keep, 1, rows, cols}, std::move(px)), {}, 0};
  int max_label = 0;
  for (std::size_t i = 0; i < keep; ++i) {
    d.labels.push_back(lb[8 + i]);
    max_label = std::max(max_label, d.labels.back());
  }
  d.classes = static_cast<std::size_t>(max_label) + 1;
  return d;
}

SynthKind parse_synth_kind(const std::string& s) {
  if (s == "blobs") return SynthKind::Blobs;
  if (s == "stripes") return SynthKind::Stripes;
  if (s == "texture") return SynthKind::Texture;
  throw std::invalid_argument("unknown synthetic dataset kind '" + s + "'");
}

std::string synth_kind_name(SynthKind k) {
  switch (k) {
    case SynthKind::Blobs: return "blobs";
    case SynthKind::Stripes: return "stripes";
    case SynthKind::Texture: return "texture";
  }
  return "?";
}

Dataset synth_dataset(SynthKind kind, std::size_t n, const Shape& sample_shape, std::size_t classes,
                      std::uint64_t seed) {
  if (sample_shape.size() != 3) throw std::invalid_argument("sample shape must be [C,H,W]");
  if (classes == 0 || n < classes) throw std::invalid_argument("need n >= classes >= 1");
  const std::size_t C = sample_shape[0], H = sample_shape[1], W = sample_shape[2];
  const double pi = std::numbers::pi;
  std::vector<double> px(n * C * H * W);
  std::vector<int> labels(n);

  for (std::size_t i = 0; i < n; ++i) {
    const int y = static_cast<int>(i % classes);
    labels[i] = y;
    Rng rng(derive_seed(seed, "synth-sample", i));
    const double phase = 2 * pi * static_cast<double>(y) / static_cast<double>(classes);
    double* img = px.data() + i * C * H * W;

    // Class-dependent geometry with per-sample jitter.
    const double cy = 0.5 + 0.28 * std::sin(phase) + rng.uniform(-0.06, 0.06);
    const double cx = 0.5 + 0.28 * std::cos(phase) + rng.uniform(-0.06, 0.06);
    const double radius = rng.uniform(0.16, 0.26);
    const double angle = phase / 2 + rng.uniform(-0.15, 0.15);
    const double freq = 0.9 * static_cast<double>(std::min(H, W)) / 4.0 + (y % 3);
    const double offset = rng.uniform(0, 2 * pi);

    for (std::size_t c = 0; c < C; ++c) {
      const double tint = C == 1 ? 1.0 : 0.55 + 0.45 * std::cos(phase + 2.1 * static_cast<double>(c));
      for (std::size_t h = 0; h < H; ++h) {
        for (std::size_t w = 0; w < W; ++w) {
          const double v = (static_cast<double>(h) + 0.5) / static_cast<double>(H);
          const double u = (static_cast<double>(w) + 0.5) / static_cast<double>(W);
          double p = 0.0;
          switch (kind) {
            case SynthKind::Blobs: {
              const double d2 = (u - cx) * (u - cx) + (v - cy) * (v - cy);
              p = 0.1 + 0.85 * std::exp(-d2 / (2 * radius * radius));
              break;
            }
            case SynthKind::Stripes: {
              const double t = u * std::cos(angle) + v * std::sin(angle);
              p = std::sin(2 * pi * freq * t + offset) > 0 ? 0.9 : 0.1;
              break;
            }
            case SynthKind::Texture: {
              const double a = std::sin(2 * pi * (2 + y % 4) * u + offset);
              const double b = std::sin(2 * pi * (2 + (y / 4) % 4) * v + offset * 0.5);
              p = 0.5 + 0.3 * a * b + 0.1 * (rng.uniform() - 0.5);
              break;
            }
          }
          img[(c * H + h) * W + w] = std::clamp(p * tint + rng.uniform(-0.02, 0.02), 0.0, 1.0);
        }
      }
    }
  }
  return {Tensor({n, C, H, W}, std::move(px)), std::move(labels), classes};
}

double image_tv(const Tensor& image) {
  if (image.rank() != 3) throw ShapeError("image_tv expects [C,H,W], got " + shape_str(image.shape()));
  const std::size_t C = image.dim(0), H = image.dim(1), W = image.dim(2);
  double tv = 0.0;
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t h = 0; h < H; ++h) {
      for (std::size_t w = 0; w < W; ++w) {
        const double p = image[(c * H + h) * W + w];
        if (w + 1 < W) tv += std::fabs(image[(c * H + h) * W + w + 1] - p);
        if (h + 1 < H) tv += std::fabs(image[(c * H + h + 1) * W + w] - p);
      }
    }
  }
  return tv;
}

void write_pnm(const std::filesystem::path& path, const Tensor& image) {
  if (image.rank() != 3 || (image.dim(0) != 1 && image.dim(0) != 3)) {
    throw ShapeError("write_pnm expects [1,H,W] or [3,H,W], got " + shape_str(image.shape()));
  }
  const std::size_t C = image.dim(0), H = image.dim(1), W = image.dim(2);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << (C == 1 ? "P5" : "P6") << "\n" << W << " " << H << "\n255\n";
  for (std::size_t h = 0; h < H; ++h) {
    for (std::size_t w = 0; w < W; ++w) {
      for (std::size_t c = 0; c < C; ++c) {
        const double v = std::clamp(image[(c * H + h) * W + w], 0.0, 1.0);
        out.put(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
      }
    }
  }
}

}  // namespace gleak::data
