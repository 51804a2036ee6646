#include "tmlp/numerics.hpp"

#include <cblas.h>

namespace tmlp::numerics {

void gemm(bool trans_a, bool trans_b, index m, index n, index k, float alpha,
          const float* a, index lda, const float* b, index ldb, float beta, float* c,
          index ldc) {
  cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, blasint(m), blasint(n), blasint(k),
              alpha, a, blasint(lda), b, blasint(ldb), beta, c, blasint(ldc));
}

void gemm(bool trans_a, bool trans_b, index m, index n, index k, double alpha,
          const double* a, index lda, const double* b, index ldb, double beta,
          double* c, index ldc) {
  cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, blasint(m), blasint(n), blasint(k),
              alpha, a, blasint(lda), b, blasint(ldb), beta, c, blasint(ldc));
}

}  // namespace tmlp::numerics
