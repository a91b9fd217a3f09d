#pragma once
// Data-parallel inner loops used by the tensor engine.
//
// Every kernel has a portable scalar reference implementation. On x86-64 an
// AVX2/FMA variant is compiled into its own translation unit and selected at
// runtime when the CPU supports it. Element-wise kernels are bit-identical
// between variants; reductions and gemm differ only by summation order.

#include <cstddef>
#include <string_view>

namespace gleak::kernels {

enum class Isa { Scalar, Avx2 };

struct KernelTable {
  Isa isa;
  // out[i] = a[i] + b[i], etc. `out` may alias `a` or `b`.
  void (*add)(const double* a, const double* b, double* out, std::size_t n);
  void (*sub)(const double* a, const double* b, double* out, std::size_t n);
  void (*mul)(const double* a, const double* b, double* out, std::size_t n);
  void (*div)(const double* a, const double* b, double* out, std::size_t n);
  // out[i] = alpha * a[i]
  void (*scale)(double alpha, const double* a, double* out, std::size_t n);
  // y[i] += alpha * x[i]   (multiply then add, never fused, so variants agree)
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  double (*sum)(const double* a, std::size_t n);
  double (*dot)(const double* a, const double* b, std::size_t n);
  // C[M,N] (+)= op(A) * op(B), row-major. op(A) is MxK, op(B) is KxN.
  // trans_a: A stored KxM; trans_b: B stored NxK.
  void (*gemm)(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
               const double* a, const double* b, double* c, bool accumulate);
};

const KernelTable& scalar_table();
// nullptr when the variant was not built or the CPU lacks the features.
const KernelTable* avx2_table();

// Kernel set used by the engine. Chosen once from CPU features; the
// GLEAK_KERNELS environment variable ("scalar" or "avx2") overrides.
const KernelTable& active();
void set_active(Isa isa);
std::string_view isa_name(Isa isa);

}  // namespace gleak::kernels
