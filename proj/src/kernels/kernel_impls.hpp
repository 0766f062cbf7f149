#pragma once

#include <cstddef>

namespace peerstyle::kernels {

namespace scalar {
void gemm(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
          bool accumulate);
double dot(const double* x, const double* y, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
double sum(const double* x, std::size_t n);
double squared_distance(const double* x, const double* y, std::size_t n);
}  // namespace scalar

#if defined(PEERSTYLE_HAVE_AVX2)
namespace avx2 {
void gemm(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
          bool accumulate);
double dot(const double* x, const double* y, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
double sum(const double* x, std::size_t n);
double squared_distance(const double* x, const double* y, std::size_t n);
}  // namespace avx2
#endif

}  // namespace peerstyle::kernels
