#pragma once

namespace shapeiq {

// Row-major C = alpha * op(A) * op(B) + beta * C, dispatched to BLAS. The
// float path drives all training compute; the double path exists for the
// finite-difference gradient checks.
void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha,
          const float* a, int lda, const float* b, int ldb, float beta, float* c,
          int ldc);
void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha,
          const double* a, int lda, const double* b, int ldb, double beta, double* c,
          int ldc);

// Fixes the BLAS backend to one deterministic single-threaded configuration
// (parallelism lives above the GEMM calls). Called lazily before the first
// multiplication; safe to call many times.
void init_compute_backend();

// Worker threads used for batch-level parallel loops.
int compute_threads();
void set_compute_threads(int threads);

}  // namespace shapeiq
