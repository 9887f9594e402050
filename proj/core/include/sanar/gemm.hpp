#pragma once

#include <cstddef>

namespace sanar::detail {

// C[M,N] = alpha * op(A)[M,K] * op(B)[K,N] + beta * C, row-major with
// explicit leading dimensions, so sub-blocks of wider matrices (e.g. one
// attention head's columns) can be addressed without copying.
void gemm_ld(bool ta, bool tb, int m, int n, int k, float alpha,
             const float* a, int lda, const float* b, int ldb, float beta,
             float* c, int ldc);
void gemm_ld(bool ta, bool tb, int m, int n, int k, double alpha,
             const double* a, int lda, const double* b, int ldb, double beta,
             double* c, int ldc);

// Dense convenience: physical A is [M,K] (or [K,M] when ta), B is [K,N]
// (or [N,K] when tb), C is [M,N].
template <typename S>
void gemm(bool ta, bool tb, int m, int n, int k, S alpha, const S* a,
          const S* b, S beta, S* c) {
  gemm_ld(ta, tb, m, n, k, alpha, a, ta ? m : k, b, tb ? k : n, beta, c, n);
}

}  // namespace sanar::detail
