#include "convfield/simd/kernels.hpp"

#include "convfield/error.hpp"

#include <atomic>

namespace convfield::simd {

#if defined(CONVFIELD_HAVE_AVX2)
const KernelTable* avx2_table();
#endif

bool avx2_supported() {
#if defined(CONVFIELD_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  static const bool supported = [] {
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  }();
  return supported;
#else
  return false;
#endif
}

const KernelTable* avx2_kernels() {
#if defined(CONVFIELD_HAVE_AVX2)
  return avx2_supported() ? avx2_table() : nullptr;
#else
  return nullptr;
#endif
}

namespace {

const KernelTable* detect() {
  const KernelTable* table = avx2_kernels();
  return table != nullptr ? table : &scalar_kernels();
}

std::atomic<const KernelTable*>& active() {
  static std::atomic<const KernelTable*> table{detect()};
  return table;
}

} // namespace

const KernelTable& kernels() {
  return *active().load(std::memory_order_relaxed);
}

Backend active_backend() {
  return &kernels() == &scalar_kernels() ? Backend::Scalar : Backend::Avx2;
}

void set_backend(Backend backend) {
  if (backend == Backend::Scalar) {
    active().store(&scalar_kernels());
    return;
  }
  const KernelTable* table = avx2_kernels();
  if (table == nullptr) {
    fail(ErrorKind::InvalidArgument, "AVX2 kernels are not available on this CPU/build");
  }
  active().store(table);
}

const char* backend_name(Backend backend) {
  return backend == Backend::Scalar ? "scalar" : "avx2";
}

} // namespace convfield::simd
