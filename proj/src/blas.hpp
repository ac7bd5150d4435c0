#pragma once

namespace paramisp::blas {

// Row-major C = alpha * op(A) * op(B) + beta * C. Uses the system BLAS unless
// its kernel for this precision fails a one-time known-answer check.
void gemm(bool ta, bool tb, int m, int n, int k, float alpha, const float* a, int lda, const float* b, int ldb,
          float beta, float* c, int ldc);
void gemm(bool ta, bool tb, int m, int n, int k, double alpha, const double* a, int lda, const double* b, int ldb,
          double beta, double* c, int ldc);

/// Whether the system BLAS passed the check for float / double.
bool system_gemm_ok(bool double_precision);

}  // namespace paramisp::blas
