#include <atomic>

#include "plotforge/kernels.hpp"

namespace plotforge::kernels {

namespace {
std::atomic<Backend> g_backend{Backend::parallel};
}

void set_backend(Backend b) { g_backend.store(b); }
Backend backend() { return g_backend.load(); }

namespace reference {

template <class Real>
void gemm(const GemmArgs& g, const Real* a, const Real* b, Real* c) {
  for (std::size_t i = 0; i < g.m; ++i) {
    for (std::size_t j = 0; j < g.n; ++j) {
      Real acc = g.accumulate ? c[i * g.ldc + j] : Real(0);
      for (std::size_t p = 0; p < g.k; ++p) {
        const Real av = g.trans_a ? a[p * g.lda + i] : a[i * g.lda + p];
        const Real bv = g.trans_b ? b[j * g.ldb + p] : b[p * g.ldb + j];
        acc += av * bv;
      }
      c[i * g.ldc + j] = acc;
    }
  }
}

template void gemm<float>(const GemmArgs&, const float*, const float*, float*);
template void gemm<double>(const GemmArgs&, const double*, const double*, double*);

}  // namespace reference
}  // namespace plotforge::kernels
