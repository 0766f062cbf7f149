#include "peerstyle/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <string>

#include "kernel_impls.hpp"

namespace peerstyle::kernels {

namespace {

const KernelTable kScalar{"scalar", scalar::gemm, scalar::dot, scalar::axpy, scalar::sum,
                          scalar::squared_distance};

#if defined(PEERSTYLE_HAVE_AVX2)
const KernelTable kAvx2{"avx2", avx2::gemm, avx2::dot, avx2::axpy, avx2::sum, avx2::squared_distance};

bool cpu_has_avx2_fma() {
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
}
#endif

const KernelTable* initial_table() {
  const char* env = std::getenv("PEERSTYLE_KERNELS");
  if (env != nullptr && std::string(env) == "scalar") return &kScalar;
  if (const KernelTable* simd = avx2_table()) return simd;
  return &kScalar;
}

std::atomic<const KernelTable*>& current() {
  static std::atomic<const KernelTable*> table{initial_table()};
  return table;
}

}  // namespace

const KernelTable& scalar_table() { return kScalar; }

const KernelTable* avx2_table() {
#if defined(PEERSTYLE_HAVE_AVX2)
  static const bool supported = cpu_has_avx2_fma();
  return supported ? &kAvx2 : nullptr;
#else
  return nullptr;
#endif
}

const KernelTable& active() { return *current().load(std::memory_order_relaxed); }

bool select(std::string_view name) {
  if (name == "scalar") {
    current().store(&kScalar);
    return true;
  }
  if (name == "avx2") {
    if (const KernelTable* simd = avx2_table()) {
      current().store(simd);
      return true;
    }
  }
  return false;
}

void transpose(std::size_t rows, std::size_t cols, const double* src, double* dst) {
  constexpr std::size_t kBlock = 16;
  for (std::size_t r0 = 0; r0 < rows; r0 += kBlock) {
    for (std::size_t c0 = 0; c0 < cols; c0 += kBlock) {
      const std::size_t r1 = std::min(rows, r0 + kBlock);
      const std::size_t c1 = std::min(cols, c0 + kBlock);
      for (std::size_t r = r0; r < r1; ++r) {
        for (std::size_t c = c0; c < c1; ++c) dst[c * rows + r] = src[r * cols + c];
      }
    }
  }
}

}  // namespace peerstyle::kernels
