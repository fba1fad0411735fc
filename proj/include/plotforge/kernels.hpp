#pragma once

#include <cstddef>

// Dense row-major GEMM used by every matrix product in the autodiff layer.
//
//   C[m x n] = (accumulate ? C : 0) + op(A) * op(B)
//
// op(A) is m x k; when trans_a is set A is stored k x m. op(B) is k x n; when
// trans_b is set B is stored n x k. lda/ldb/ldc are row strides in elements.
//
// Two implementations exist. `reference` is the textbook triple loop and is
// kept for testing. `parallel` splits rows of C across OpenMP threads with a
// vectorisable inner loop. Both accumulate each C[i][j] in ascending p order,
// so for the same inputs they agree bitwise.

namespace plotforge::kernels {

struct GemmArgs {
  bool trans_a = false;
  bool trans_b = false;
  std::size_t m = 0;
  std::size_t n = 0;
  std::size_t k = 0;
  std::size_t lda = 0;
  std::size_t ldb = 0;
  std::size_t ldc = 0;
  bool accumulate = false;
};

namespace reference {
template <class Real>
void gemm(const GemmArgs& args, const Real* a, const Real* b, Real* c);
}  // namespace reference

namespace parallel {
template <class Real>
void gemm(const GemmArgs& args, const Real* a, const Real* b, Real* c);

int max_threads();
}  // namespace parallel

enum class Backend { reference, parallel };

// Process-wide switch; tests and the benchmark flip it, everything else
// leaves the default (parallel).
void set_backend(Backend backend);
Backend backend();

template <class Real>
void gemm(const GemmArgs& args, const Real* a, const Real* b, Real* c) {
  if (backend() == Backend::reference) {
    reference::gemm(args, a, b, c);
  } else {
    parallel::gemm(args, a, b, c);
  }
}

}  // namespace plotforge::kernels
