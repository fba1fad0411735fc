#include <omp.h>

#include <cstdint>
#include <vector>

#include "plotforge/kernels.hpp"

namespace plotforge::kernels::parallel {

int max_threads() { return omp_get_max_threads(); }

namespace {

// Rows are independent, so any static split gives the same result as the
// serial loop. Small products stay on one thread.
constexpr std::size_t kMinWorkPerThread = 1u << 15;

bool worth_splitting(const GemmArgs& g) {
  return g.m > 1 && g.m * g.n * g.k >= kMinWorkPerThread * 2;
}

template <class Real>
void gemm_nn_rows(const GemmArgs& g, const Real* a, const Real* b, std::size_t lda_row,
                  std::size_t lda_col, std::size_t ldb, Real* c) {
  const auto m = static_cast<std::int64_t>(g.m);
#pragma omp parallel for schedule(static) if (worth_splitting(g))
  for (std::int64_t ii = 0; ii < m; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    Real* crow = c + i * g.ldc;
    if (!g.accumulate) {
      for (std::size_t j = 0; j < g.n; ++j) crow[j] = Real(0);
    }
    for (std::size_t p = 0; p < g.k; ++p) {
      const Real av = a[i * lda_row + p * lda_col];
      const Real* brow = b + p * ldb;
      for (std::size_t j = 0; j < g.n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace

template <class Real>
void gemm(const GemmArgs& g, const Real* a, const Real* b, Real* c) {
  if (g.m == 0 || g.n == 0) return;
  // op(A)[i][p] lives at a[i*lda_row + p*lda_col].
  const std::size_t lda_row = g.trans_a ? 1 : g.lda;
  const std::size_t lda_col = g.trans_a ? g.lda : 1;
  if (!g.trans_b) {
    gemm_nn_rows(g, a, b, lda_row, lda_col, g.ldb, c);
    return;
  }
  // Materialise B^T (k x n) so the inner loop runs over contiguous memory.
  std::vector<Real> bt(g.k * g.n);
  for (std::size_t j = 0; j < g.n; ++j) {
    for (std::size_t p = 0; p < g.k; ++p) bt[p * g.n + j] = b[j * g.ldb + p];
  }
  gemm_nn_rows(g, a, bt.data(), lda_row, lda_col, g.n, c);
}

template void gemm<float>(const GemmArgs&, const float*, const float*, float*);
template void gemm<double>(const GemmArgs&, const double*, const double*, double*);

}  // namespace plotforge::kernels::parallel
