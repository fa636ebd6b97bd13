#include "consor/kernels.hpp"

#include <algorithm>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace consor::kernels {

namespace {

// Computes rows [row_begin, row_end) of C.
inline void gemm_rows(bool trans_a, bool trans_b, std::size_t row_begin, std::size_t row_end, std::size_t m,
                      std::size_t n, std::size_t k, const double* a, const double* b, double* c, bool accumulate) {
  for (std::size_t i = row_begin; i < row_end; ++i) {
    double* crow = c + i * n;
    if (!accumulate) std::fill(crow, crow + n, 0.0);
    if (trans_b) {
      for (std::size_t j = 0; j < n; ++j) {
        const double* brow = b + j * k;
        double acc = 0.0;
        if (trans_a) {
          for (std::size_t p = 0; p < k; ++p) acc += a[p * m + i] * brow[p];
        } else {
          const double* arow = a + i * k;
          for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
        }
        crow[j] += acc;
      }
    } else {
      for (std::size_t p = 0; p < k; ++p) {
        const double av = trans_a ? a[p * m + i] : a[i * k + p];
        if (av == 0.0) continue;
        const double* brow = b + p * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  }
}

}  // namespace

void gemm_serial(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const double* a,
                 const double* b, double* c, bool accumulate) {
  gemm_rows(trans_a, trans_b, 0, m, m, n, k, a, b, c, accumulate);
}

void gemm_omp(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const double* a,
              const double* b, double* c, bool accumulate) {
#ifdef _OPENMP
  const auto rows = static_cast<long>(m);
#pragma omp parallel for schedule(static)
  for (long i = 0; i < rows; ++i) {
    const auto row = static_cast<std::size_t>(i);
    gemm_rows(trans_a, trans_b, row, row + 1, m, n, k, a, b, c, accumulate);
  }
#else
  gemm_serial(trans_a, trans_b, m, n, k, a, b, c, accumulate);
#endif
}

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
          double* c, bool accumulate) {
#ifdef _OPENMP
  if (m > 1 && m * n * k >= kParallelGemmWork && !omp_in_parallel() && omp_get_max_threads() > 1) {
    gemm_omp(trans_a, trans_b, m, n, k, a, b, c, accumulate);
    return;
  }
#endif
  gemm_serial(trans_a, trans_b, m, n, k, a, b, c, accumulate);
}

bool openmp_enabled() {
#ifdef _OPENMP
  return true;
#else
  return false;
#endif
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_threads(int n) {
#ifdef _OPENMP
  omp_set_num_threads(std::max(1, n));
#else
  (void)n;
#endif
}

}  // namespace consor::kernels
