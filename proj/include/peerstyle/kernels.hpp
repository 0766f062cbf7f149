#pragma once

// Data-parallel inner loops behind the tensor ops. Each kernel has a scalar
// reference implementation and, on x86-64, an AVX2+FMA variant. The variant is
// chosen once at startup from CPUID; PEERSTYLE_KERNELS=scalar forces the
// reference path. Variants agree to rounding, not bit-for-bit: reductions are
// reassociated and FMA contracts multiply-adds. Within one process the
// selected table never changes, so results stay bit-deterministic.

#include <cstddef>
#include <string_view>

namespace peerstyle::kernels {

struct KernelTable {
  const char* name;
  /// c[m x n] (+)= a[m x k] * b[k x n], all row-major and densely packed.
  void (*gemm)(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
               double* c, bool accumulate);
  double (*dot)(const double* x, const double* y, std::size_t n);
  /// y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  double (*sum)(const double* x, std::size_t n);
  /// sum_i (x_i - y_i)^2, computed from differences so identical inputs give exactly 0.
  double (*squared_distance)(const double* x, const double* y, std::size_t n);
};

const KernelTable& scalar_table();
/// nullptr when the build or the CPU lacks AVX2+FMA.
const KernelTable* avx2_table();

const KernelTable& active();
/// Select "scalar" or "avx2"; returns false if the requested table is unavailable.
bool select(std::string_view name);

/// dst[cols x rows] = transpose of src[rows x cols].
void transpose(std::size_t rows, std::size_t cols, const double* src, double* dst);

}  // namespace peerstyle::kernels
