// Compiled with -mavx2 -mfma. Only reached through avx2_table() after a
// runtime CPU check.
#include <immintrin.h>

#include <vector>

#include "gleak/kernels.hpp"

namespace gleak::kernels::detail {
namespace {

template <typename VecOp, typename ScalarOp>
inline void binary_loop(const double* a, const double* b, double* out, std::size_t n, VecOp vop,
                        ScalarOp sop) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, vop(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  }
  for (; i < n; ++i) out[i] = sop(a[i], b[i]);
}

void add_avx2(const double* a, const double* b, double* out, std::size_t n) {
  binary_loop(a, b, out, n, [](__m256d x, __m256d y) { return _mm256_add_pd(x, y); },
              [](double x, double y) { return x + y; });
}

void sub_avx2(const double* a, const double* b, double* out, std::size_t n) {
  binary_loop(a, b, out, n, [](__m256d x, __m256d y) { return _mm256_sub_pd(x, y); },
              [](double x, double y) { return x - y; });
}

void mul_avx2(const double* a, const double* b, double* out, std::size_t n) {
  binary_loop(a, b, out, n, [](__m256d x, __m256d y) { return _mm256_mul_pd(x, y); },
              [](double x, double y) { return x * y; });
}

void div_avx2(const double* a, const double* b, double* out, std::size_t n) {
  binary_loop(a, b, out, n, [](__m256d x, __m256d y) { return _mm256_div_pd(x, y); },
              [](double x, double y) { return x / y; });
}

void scale_avx2(double alpha, const double* a, double* out, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(out + i, _mm256_mul_pd(va, _mm256_loadu_pd(a + i)));
  for (; i < n; ++i) out[i] = alpha * a[i];
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d t = _mm256_mul_pd(va, _mm256_loadu_pd(x + i));
    _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), t));
  }
  for (; i < n; ++i) {
    const double t = alpha * x[i];
    y[i] += t;
  }
}

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

double sum_avx2(const double* a, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_add_pd(acc0, _mm256_loadu_pd(a + i));
    acc1 = _mm256_add_pd(acc1, _mm256_loadu_pd(a + i + 4));
  }
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += a[i];
  return s;
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
  }
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

void gemm_avx2(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
               const double* a, const double* b, double* c, bool accumulate) {
  if (!accumulate) {
    for (std::size_t i = 0; i < m * n; ++i) c[i] = 0.0;
  }
  if (trans_b) {
    // Rows of op(A) and rows of B are both contiguous along k when A is not
    // transposed; otherwise gather the column of A first.
    std::vector<double> arow_buf(trans_a ? k : 0);
    for (std::size_t i = 0; i < m; ++i) {
      const double* arow = a + i * k;
      if (trans_a) {
        for (std::size_t p = 0; p < k; ++p) arow_buf[p] = a[p * m + i];
        arow = arow_buf.data();
      }
      for (std::size_t j = 0; j < n; ++j) c[i * n + j] += dot_avx2(arow, b + j * k, k);
    }
    return;
  }
  std::size_t i = 0;
  // Two rows of C at a time share each B row load.
  for (; i + 2 <= m; i += 2) {
    double* c0 = c + i * n;
    double* c1 = c0 + n;
    for (std::size_t p = 0; p < k; ++p) {
      const double a0 = trans_a ? a[p * m + i] : a[i * k + p];
      const double a1 = trans_a ? a[p * m + i + 1] : a[(i + 1) * k + p];
      if (a0 == 0.0 && a1 == 0.0) continue;
      const __m256d va0 = _mm256_set1_pd(a0);
      const __m256d va1 = _mm256_set1_pd(a1);
      const double* brow = b + p * n;
      std::size_t j = 0;
      for (; j + 4 <= n; j += 4) {
        const __m256d vb = _mm256_loadu_pd(brow + j);
        _mm256_storeu_pd(c0 + j, _mm256_fmadd_pd(va0, vb, _mm256_loadu_pd(c0 + j)));
        _mm256_storeu_pd(c1 + j, _mm256_fmadd_pd(va1, vb, _mm256_loadu_pd(c1 + j)));
      }
      for (; j < n; ++j) {
        c0[j] += a0 * brow[j];
        c1[j] += a1 * brow[j];
      }
    }
  }
  for (; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = trans_a ? a[p * m + i] : a[i * k + p];
      if (av == 0.0) continue;
      const __m256d va = _mm256_set1_pd(av);
      const double* brow = b + p * n;
      std::size_t j = 0;
      for (; j + 4 <= n; j += 4) {
        _mm256_storeu_pd(crow + j,
                         _mm256_fmadd_pd(va, _mm256_loadu_pd(brow + j), _mm256_loadu_pd(crow + j)));
      }
      for (; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace

const KernelTable& avx2_table_impl() {
  static const KernelTable table{Isa::Avx2, add_avx2, sub_avx2, mul_avx2, div_avx2,
                                 scale_avx2, axpy_avx2, sum_avx2, dot_avx2, gemm_avx2};
  return table;
}

}  // namespace gleak::kernels::detail
