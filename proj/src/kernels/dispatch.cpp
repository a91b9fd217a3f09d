#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "gleak/kernels.hpp"

namespace gleak::kernels {

#ifdef GLEAK_HAVE_AVX2
namespace detail {
const KernelTable& avx2_table_impl();
}
#endif

const KernelTable* avx2_table() {
#if defined(GLEAK_HAVE_AVX2) && (defined(__x86_64__) || defined(__i386__))
  static const bool supported = [] {
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  }();
  if (supported) return &detail::avx2_table_impl();
#endif
  return nullptr;
}

namespace {

const KernelTable* choose_default() {
  if (const char* env = std::getenv("GLEAK_KERNELS")) {
    const std::string want(env);
    if (want == "scalar") return &scalar_table();
    if (want == "avx2") {
      if (const KernelTable* t = avx2_table()) return t;
      throw std::runtime_error("GLEAK_KERNELS=avx2 requested but AVX2/FMA is unavailable");
    }
  }
  if (const KernelTable* t = avx2_table()) return t;
  return &scalar_table();
}

std::atomic<const KernelTable*>& slot() {
  static std::atomic<const KernelTable*> current{choose_default()};
  return current;
}

}  // namespace

const KernelTable& active() { return *slot().load(std::memory_order_acquire); }

void set_active(Isa isa) {
  if (isa == Isa::Scalar) {
    slot().store(&scalar_table(), std::memory_order_release);
    return;
  }
  const KernelTable* t = avx2_table();
  if (t == nullptr) throw std::runtime_error("AVX2 kernels unavailable on this machine");
  slot().store(t, std::memory_order_release);
}

std::string_view isa_name(Isa isa) { return isa == Isa::Avx2 ? "avx2" : "scalar"; }

}  // namespace gleak::kernels
