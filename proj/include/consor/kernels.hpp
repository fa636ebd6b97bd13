#pragma once

// Dense row-major GEMM kernels.
//
//   C[m x n] (+)= op(A) * op(B),  op(A) is m x k, op(B) is k x n
//
// `trans_a` means A is stored k x m; `trans_b` means B is stored n x k.
// The serial kernel is the reference. The OpenMP kernel splits rows of C
// across threads and keeps the per-element summation order, so both produce
// bitwise-identical results.

#include <cstddef>

namespace consor::kernels {

void gemm_serial(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const double* a,
                 const double* b, double* c, bool accumulate);

void gemm_omp(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const double* a,
              const double* b, double* c, bool accumulate);

/// Uses the OpenMP kernel for large products outside an active parallel region.
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
          double* c, bool accumulate);

/// m*n*k above which gemm() dispatches to the OpenMP kernel.
inline constexpr std::size_t kParallelGemmWork = std::size_t{1} << 18;

bool openmp_enabled();
int max_threads();
void set_threads(int n);

}  // namespace consor::kernels
