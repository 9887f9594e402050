#include "sanar/gemm.hpp"

#ifdef SANAR_USE_CBLAS
#include <cblas.h>
#endif

namespace sanar::detail {

#ifdef SANAR_USE_CBLAS

void gemm_ld(bool ta, bool tb, int m, int n, int k, float alpha,
             const float* a, int lda, const float* b, int ldb, float beta,
             float* c, int ldc) {
  cblas_sgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans,
              tb ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b, ldb,
              beta, c, ldc);
}

void gemm_ld(bool ta, bool tb, int m, int n, int k, double alpha,
             const double* a, int lda, const double* b, int ldb, double beta,
             double* c, int ldc) {
  cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans,
              tb ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b, ldb,
              beta, c, ldc);
}

#else

namespace {

template <typename S>
void gemm_ref(bool ta, bool tb, int m, int n, int k, S alpha, const S* a,
              int lda, const S* b, int ldb, S beta, S* c, int ldc) {
  auto A = [&](int i, int j) { return ta ? a[j * lda + i] : a[i * lda + j]; };
  auto B = [&](int i, int j) { return tb ? b[j * ldb + i] : b[i * ldb + j]; };
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      S acc = 0;
      for (int p = 0; p < k; ++p) acc += A(i, p) * B(p, j);
      // beta == 0 overwrites without reading C, matching BLAS semantics even
      // when C holds uninitialized or non-finite values.
      c[i * ldc + j] = alpha * acc + (beta == S{0} ? S{0} : beta * c[i * ldc + j]);
    }
  }
}

}  // namespace

void gemm_ld(bool ta, bool tb, int m, int n, int k, float alpha,
             const float* a, int lda, const float* b, int ldb, float beta,
             float* c, int ldc) {
  gemm_ref(ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

void gemm_ld(bool ta, bool tb, int m, int n, int k, double alpha,
             const double* a, int lda, const double* b, int ldb, double beta,
             double* c, int ldc) {
  gemm_ref(ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

#endif

}  // namespace sanar::detail
