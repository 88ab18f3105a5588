#include <algorithm>

#include "lstmcf/kernels.hpp"

namespace lstmcf::kernels {

namespace {
inline double elem(const double* m, bool trans, std::size_t rows_stored_cols, std::size_t r, std::size_t c) {
  // Stored row-major; for trans the logical (r, c) lives at (c, r).
  return trans ? m[c * rows_stored_cols + r] : m[r * rows_stored_cols + c];
}
}  // namespace

void gemm_reference(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const double* a,
                    const double* b, double* c, bool accumulate) {
  const std::size_t lda = trans_a ? m : k;
  const std::size_t ldb = trans_b ? k : n;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += elem(a, trans_a, lda, i, p) * elem(b, trans_b, ldb, p, j);
      c[i * n + j] = accumulate ? c[i * n + j] + acc : acc;
    }
  }
}

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const double* a,
          const double* b, double* c, bool accumulate) {
  const long rows = static_cast<long>(m);
  const std::size_t lda = trans_a ? m : k;
#pragma omp parallel for schedule(static) if (m * n * k > 65536)
  for (long il = 0; il < rows; ++il) {
    const std::size_t i = static_cast<std::size_t>(il);
    double* crow = c + i * n;
    if (!accumulate) std::fill(crow, crow + n, 0.0);
    for (std::size_t p = 0; p < k; ++p) {
      const double av = trans_a ? a[p * lda + i] : a[i * lda + p];
      if (!trans_b) {
        const double* brow = b + p * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      } else {
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * b[j * k + p];
      }
    }
  }
}

}  // namespace lstmcf::kernels
