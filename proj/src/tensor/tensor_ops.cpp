#include "gleak/tensor_ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "gleak/kernels.hpp"

namespace gleak::ops {
namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

template <typename F>
Tensor map(const Tensor& a, F f) {
  std::vector<double> out(a.size());
  const double* p = a.ptr();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(p[i]);
  return Tensor(a.shape(), std::move(out));
}

using BinaryKernel = void (*)(const double*, const double*, double*, std::size_t);

Tensor binary(const Tensor& a, const Tensor& b, BinaryKernel k, const char* name) {
  require_same_shape(a, b, name);
  std::vector<double> out(a.size());
  k(a.ptr(), b.ptr(), out.data(), out.size());
  return Tensor(a.shape(), std::move(out));
}

std::vector<std::size_t> strides_of(const Shape& s) {
  std::vector<std::size_t> st(s.size(), 1);
  for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
  return st;
}

void require_rank(const Tensor& t, std::size_t r, const char* op) {
  if (t.rank() != r) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(r) + ", got shape " +
                     shape_str(t.shape()));
  }
}

struct ConvDims {
  std::size_t b, c, h, w, o, kh, kw, ho, wo;
};

ConvDims conv_dims(const Shape& x, const Shape& w, Conv2dGeometry geo) {
  if (x.size() != 4 || w.size() != 4) {
    throw ShapeError("conv2d: expected rank-4 input and kernel, got " + shape_str(x) + " and " +
                     shape_str(w));
  }
  if (x[1] != w[1]) {
    throw ShapeError("conv2d: input channels " + std::to_string(x[1]) +
                     " do not match kernel channels " + std::to_string(w[1]));
  }
  if (geo.stride == 0) throw ShapeError("conv2d: stride must be positive");
  const std::size_t hp = x[2] + 2 * geo.pad;
  const std::size_t wp = x[3] + 2 * geo.pad;
  if (hp < w[2] || wp < w[3]) throw ShapeError("conv2d: kernel larger than padded input");
  return {x[0], x[1], x[2], x[3], w[0], w[2], w[3], (hp - w[2]) / geo.stride + 1,
          (wp - w[3]) / geo.stride + 1};
}

// cols[(c*kh + i)*kw + j, oy*wo + ox] = x[c, oy*s + i - pad, ox*s + j - pad]
void im2col(const double* x, const ConvDims& d, Conv2dGeometry geo, double* cols) {
  const std::size_t hw_out = d.ho * d.wo;
  for (std::size_t c = 0; c < d.c; ++c) {
    for (std::size_t i = 0; i < d.kh; ++i) {
      for (std::size_t j = 0; j < d.kw; ++j) {
        double* row = cols + ((c * d.kh + i) * d.kw + j) * hw_out;
        for (std::size_t oy = 0; oy < d.ho; ++oy) {
          const long iy = static_cast<long>(oy * geo.stride + i) - static_cast<long>(geo.pad);
          for (std::size_t ox = 0; ox < d.wo; ++ox) {
            const long ix = static_cast<long>(ox * geo.stride + j) - static_cast<long>(geo.pad);
            const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<long>(d.h) &&
                                ix < static_cast<long>(d.w);
            row[oy * d.wo + ox] = inside ? x[(c * d.h + iy) * d.w + ix] : 0.0;
          }
        }
      }
    }
  }
}

void col2im(const double* cols, const ConvDims& d, Conv2dGeometry geo, double* x) {
  const std::size_t hw_out = d.ho * d.wo;
  for (std::size_t c = 0; c < d.c; ++c) {
    for (std::size_t i = 0; i < d.kh; ++i) {
      for (std::size_t j = 0; j < d.kw; ++j) {
        const double* row = cols + ((c * d.kh + i) * d.kw + j) * hw_out;
        for (std::size_t oy = 0; oy < d.ho; ++oy) {
          const long iy = static_cast<long>(oy * geo.stride + i) - static_cast<long>(geo.pad);
          if (iy < 0 || iy >= static_cast<long>(d.h)) continue;
          for (std::size_t ox = 0; ox < d.wo; ++ox) {
            const long ix = static_cast<long>(ox * geo.stride + j) - static_cast<long>(geo.pad);
            if (ix < 0 || ix >= static_cast<long>(d.w)) continue;
            x[(c * d.h + iy) * d.w + ix] += row[oy * d.wo + ox];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, kernels::active().add, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, kernels::active().sub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, kernels::active().mul, "mul"); }

Tensor div(const Tensor& a, const Tensor& b) {
  for (double v : b.data()) {
    if (v == 0.0) throw DomainError("div: division by zero");
  }
  return binary(a, b, kernels::active().div, "div");
}

Tensor scale(const Tensor& a, double c) {
  std::vector<double> out(a.size());
  kernels::active().scale(c, a.ptr(), out.data(), out.size());
  return Tensor(a.shape(), std::move(out));
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }
Tensor exp(const Tensor& a) { return map(a, [](double v) { return std::exp(v); }); }

Tensor log(const Tensor& a) {
  for (double v : a.data()) {
    if (!(v > 0.0)) throw DomainError("log: non-positive input " + std::to_string(v));
  }
  return map(a, [](double v) { return std::log(v); });
}

Tensor sqrt(const Tensor& a) {
  for (double v : a.data()) {
    if (!(v >= 0.0)) throw DomainError("sqrt: negative input " + std::to_string(v));
  }
  return map(a, [](double v) { return std::sqrt(v); });
}

Tensor abs(const Tensor& a) { return map(a, [](double v) { return std::fabs(v); }); }
Tensor sign(const Tensor& a) {
  return map(a, [](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}
Tensor relu(const Tensor& a) { return map(a, [](double v) { return v > 0.0 ? v : 0.0; }); }
Tensor relu_mask(const Tensor& a) { return map(a, [](double v) { return v > 0.0 ? 1.0 : 0.0; }); }

double sum(const Tensor& a) { return kernels::active().sum(a.ptr(), a.size()); }

double dot(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "dot");
  return kernels::active().dot(a.ptr(), b.ptr(), a.size());
}

double l2norm(const Tensor& a) { return std::sqrt(dot(a, a)); }

Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a, bool trans_b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = trans_a ? a.dim(1) : a.dim(0);
  const std::size_t k = trans_a ? a.dim(0) : a.dim(1);
  const std::size_t kb = trans_b ? b.dim(1) : b.dim(0);
  const std::size_t n = trans_b ? b.dim(0) : b.dim(1);
  if (k != kb) {
    throw ShapeError("matmul: inner dimensions differ (" + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()) + ")");
  }
  std::vector<double> out(m * n);
  kernels::active().gemm(trans_a, trans_b, m, n, k, a.ptr(), b.ptr(), out.data(), false);
  return Tensor({m, n}, std::move(out));
}

Tensor conv2d(const Tensor& x, const Tensor& w, Conv2dGeometry geo) {
  const ConvDims d = conv_dims(x.shape(), w.shape(), geo);
  const std::size_t ckk = d.c * d.kh * d.kw;
  const std::size_t hw_out = d.ho * d.wo;
  std::vector<double> cols(ckk * hw_out);
  std::vector<double> out(d.b * d.o * hw_out);
  const auto& k = kernels::active();
  for (std::size_t b = 0; b < d.b; ++b) {
    im2col(x.ptr() + b * d.c * d.h * d.w, d, geo, cols.data());
    k.gemm(false, false, d.o, hw_out, ckk, w.ptr(), cols.data(), out.data() + b * d.o * hw_out,
           false);
  }
  return Tensor({d.b, d.o, d.ho, d.wo}, std::move(out));
}

Tensor conv2d_input_grad(const Tensor& gy, const Tensor& w, const Shape& x_shape,
                         Conv2dGeometry geo) {
  const ConvDims d = conv_dims(x_shape, w.shape(), geo);
  const Shape expect{d.b, d.o, d.ho, d.wo};
  if (gy.shape() != expect) {
    throw ShapeError("conv2d_input_grad: upstream shape " + shape_str(gy.shape()) +
                     " expected " + shape_str(expect));
  }
  const std::size_t ckk = d.c * d.kh * d.kw;
  const std::size_t hw_out = d.ho * d.wo;
  std::vector<double> cols(ckk * hw_out);
  std::vector<double> out(d.b * d.c * d.h * d.w, 0.0);
  const auto& k = kernels::active();
  for (std::size_t b = 0; b < d.b; ++b) {
    k.gemm(true, false, ckk, hw_out, d.o, w.ptr(), gy.ptr() + b * d.o * hw_out, cols.data(),
           false);
    col2im(cols.data(), d, geo, out.data() + b * d.c * d.h * d.w);
  }
  return Tensor(x_shape, std::move(out));
}

Tensor conv2d_weight_grad(const Tensor& x, const Tensor& gy, const Shape& w_shape,
                          Conv2dGeometry geo) {
  const ConvDims d = conv_dims(x.shape(), w_shape, geo);
  const Shape expect{d.b, d.o, d.ho, d.wo};
  if (gy.shape() != expect) {
    throw ShapeError("conv2d_weight_grad: upstream shape " + shape_str(gy.shape()) +
                     " expected " + shape_str(expect));
  }
  const std::size_t ckk = d.c * d.kh * d.kw;
  const std::size_t hw_out = d.ho * d.wo;
  std::vector<double> cols(ckk * hw_out);
  std::vector<double> out(d.o * ckk, 0.0);
  const auto& k = kernels::active();
  for (std::size_t b = 0; b < d.b; ++b) {
    im2col(x.ptr() + b * d.c * d.h * d.w, d, geo, cols.data());
    k.gemm(false, true, d.o, ckk, hw_out, gy.ptr() + b * d.o * hw_out, cols.data(), out.data(),
           true);
  }
  return Tensor(w_shape, std::move(out));
}

Tensor avgpool2d(const Tensor& x, std::size_t k) {
  require_rank(x, 4, "avgpool2d");
  if (k == 0 || x.dim(2) % k != 0 || x.dim(3) % k != 0) {
    throw ShapeError("avgpool2d: spatial dims " + shape_str(x.shape()) +
                     " not divisible by window " + std::to_string(k));
  }
  const std::size_t planes = x.dim(0) * x.dim(1);
  const std::size_t h = x.dim(2), w = x.dim(3), ho = h / k, wo = w / k;
  const double inv = 1.0 / static_cast<double>(k * k);
  std::vector<double> out(planes * ho * wo, 0.0);
  const double* px = x.ptr();
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t oy = 0; oy < ho; ++oy) {
      for (std::size_t ox = 0; ox < wo; ++ox) {
        double s = 0.0;
        for (std::size_t i = 0; i < k; ++i) {
          for (std::size_t j = 0; j < k; ++j) s += px[(p * h + oy * k + i) * w + ox * k + j];
        }
        out[(p * ho + oy) * wo + ox] = s * inv;
      }
    }
  }
  return Tensor({x.dim(0), x.dim(1), ho, wo}, std::move(out));
}

Tensor avgpool2d_grad(const Tensor& gy, std::size_t k, const Shape& x_shape) {
  if (x_shape.size() != 4 || k == 0 || x_shape[2] % k != 0 || x_shape[3] % k != 0) {
    throw ShapeError("avgpool2d_grad: bad input shape " + shape_str(x_shape));
  }
  const std::size_t h = x_shape[2], w = x_shape[3], ho = h / k, wo = w / k;
  const Shape expect{x_shape[0], x_shape[1], ho, wo};
  if (gy.shape() != expect) throw ShapeError("avgpool2d_grad: upstream shape mismatch");
  const std::size_t planes = x_shape[0] * x_shape[1];
  const double inv = 1.0 / static_cast<double>(k * k);
  std::vector<double> out(planes * h * w);
  const double* pg = gy.ptr();
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t xx = 0; xx < w; ++xx) {
        out[(p * h + y) * w + xx] = pg[(p * ho + y / k) * wo + xx / k] * inv;
      }
    }
  }
  return Tensor(x_shape, std::move(out));
}

Tensor pad(const Tensor& x, const Shape& before, const Shape& after) {
  const std::size_t r = x.rank();
  if (before.size() != r || after.size() != r) throw ShapeError("pad: one amount per dimension");
  Shape out_shape(r);
  for (std::size_t i = 0; i < r; ++i) out_shape[i] = x.dim(i) + before[i] + after[i];
  std::vector<double> out(shape_numel(out_shape), 0.0);
  const auto in_st = strides_of(x.shape());
  const auto out_st = strides_of(out_shape);
  for (std::size_t idx = 0; idx < x.size(); ++idx) {
    std::size_t rem = idx, o = 0;
    for (std::size_t d = 0; d < r; ++d) {
      const std::size_t c = rem / in_st[d];
      rem %= in_st[d];
      o += (c + before[d]) * out_st[d];
    }
    out[o] = x[idx];
  }
  return Tensor(std::move(out_shape), std::move(out));
}

Tensor slice(const Tensor& x, const Shape& start, const Shape& stop) {
  const std::size_t r = x.rank();
  if (start.size() != r || stop.size() != r) throw ShapeError("slice: one range per dimension");
  Shape out_shape(r);
  for (std::size_t i = 0; i < r; ++i) {
    if (start[i] > stop[i] || stop[i] > x.dim(i)) {
      throw ShapeError("slice: range out of bounds for shape " + shape_str(x.shape()));
    }
    out_shape[i] = stop[i] - start[i];
  }
  std::vector<double> out(shape_numel(out_shape));
  const auto in_st = strides_of(x.shape());
  const auto out_st = strides_of(out_shape);
  for (std::size_t idx = 0; idx < out.size(); ++idx) {
    std::size_t rem = idx, in = 0;
    for (std::size_t d = 0; d < r; ++d) {
      const std::size_t c = rem / out_st[d];
      rem %= out_st[d];
      in += (c + start[d]) * in_st[d];
    }
    out[idx] = x[in];
  }
  return Tensor(std::move(out_shape), std::move(out));
}

Tensor concat(const std::vector<Tensor>& xs, std::size_t axis) {
  if (xs.empty()) throw ShapeError("concat: empty input list");
  const Shape& s0 = xs.front().shape();
  if (axis >= s0.size()) throw ShapeError("concat: axis out of range");
  Shape out_shape = s0;
  out_shape[axis] = 0;
  for (const Tensor& t : xs) {
    if (t.rank() != s0.size()) throw ShapeError("concat: rank mismatch");
    for (std::size_t d = 0; d < s0.size(); ++d) {
      if (d != axis && t.dim(d) != s0[d]) throw ShapeError("concat: shape mismatch off-axis");
    }
    out_shape[axis] += t.dim(axis);
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= s0[d];
  for (std::size_t d = axis + 1; d < s0.size(); ++d) inner *= s0[d];
  std::vector<double> out;
  out.reserve(shape_numel(out_shape));
  for (std::size_t o = 0; o < outer; ++o) {
    for (const Tensor& t : xs) {
      const std::size_t chunk = t.dim(axis) * inner;
      const double* p = t.ptr() + o * chunk;
      out.insert(out.end(), p, p + chunk);
    }
  }
  return Tensor(std::move(out_shape), std::move(out));
}

Shape broadcast_shape(const Shape& a, const Shape& b) {
  const std::size_t r = std::max(a.size(), b.size());
  Shape out(r);
  for (std::size_t i = 0; i < r; ++i) {
    const std::size_t da = i < r - a.size() ? 1 : a[i - (r - a.size())];
    const std::size_t db = i < r - b.size() ? 1 : b[i - (r - b.size())];
    if (da != db && da != 1 && db != 1) {
      throw ShapeError("cannot broadcast " + shape_str(a) + " with " + shape_str(b));
    }
    out[i] = da == 1 ? db : da;
  }
  return out;
}

namespace {

// For each output flat index, the flat index of the broadcast source element.
template <typename F>
void for_each_broadcast(const Shape& src, const Shape& dst, F f) {
  const std::size_t r = dst.size();
  if (src.size() > r) throw ShapeError("broadcast: source rank exceeds target rank");
  Shape padded(r, 1);
  for (std::size_t i = 0; i < src.size(); ++i) padded[r - src.size() + i] = src[i];
  for (std::size_t i = 0; i < r; ++i) {
    if (padded[i] != dst[i] && padded[i] != 1) {
      throw ShapeError("cannot broadcast " + shape_str(src) + " to " + shape_str(dst));
    }
  }
  const auto src_st = strides_of(padded);
  const std::size_t n = shape_numel(dst);
  std::vector<std::size_t> idx(r, 0);
  std::size_t s = 0;
  for (std::size_t o = 0; o < n; ++o) {
    f(o, s);
    for (std::size_t d = r; d-- > 0;) {
      ++idx[d];
      if (padded[d] != 1) s += src_st[d];
      if (idx[d] < dst[d]) break;
      if (padded[d] != 1) s -= src_st[d] * dst[d];
      idx[d] = 0;
    }
  }
}

}  // namespace

Tensor broadcast_to(const Tensor& x, const Shape& shape) {
  if (x.shape() == shape) return x;
  std::vector<double> out(shape_numel(shape));
  const double* p = x.ptr();
  for_each_broadcast(x.shape(), shape, [&](std::size_t o, std::size_t s) { out[o] = p[s]; });
  return Tensor(shape, std::move(out));
}

Tensor sum_to(const Tensor& x, const Shape& shape) {
  if (x.shape() == shape) return x;
  std::vector<double> out(shape_numel(shape), 0.0);
  const double* p = x.ptr();
  for_each_broadcast(shape, x.shape(), [&](std::size_t o, std::size_t s) { out[s] += p[o]; });
  return Tensor(shape, std::move(out));
}

Tensor log_softmax(const Tensor& z) {
  require_rank(z, 2, "log_softmax");
  const std::size_t b = z.dim(0), n = z.dim(1);
  std::vector<double> out(b * n);
  for (std::size_t i = 0; i < b; ++i) {
    const double* row = z.ptr() + i * n;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, row[j]);
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += std::exp(row[j] - mx);
    const double lse = mx + std::log(s);
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = row[j] - lse;
  }
  return Tensor(z.shape(), std::move(out));
}

Tensor softmax(const Tensor& z) { return exp(log_softmax(z)); }

Tensor one_hot(const std::vector<int>& labels, std::size_t classes) {
  std::vector<double> out(labels.size() * classes, 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes) {
      throw std::out_of_range("label " + std::to_string(labels[i]) + " outside [0, " +
                              std::to_string(classes) + ")");
    }
    out[i * classes + static_cast<std::size_t>(labels[i])] = 1.0;
  }
  return Tensor({labels.size(), classes}, std::move(out));
}

}  // namespace gleak::ops
