#include "shapeiq/gemm.hpp"

#include <dlfcn.h>

#include <algorithm>
#include <cstdlib>
#include <mutex>
#include <stdexcept>
#include <thread>

namespace shapeiq {

namespace {

// OpenBLAS picks its kernel from OPENBLAS_CORETYPE at library load time, and
// on this family of machines auto-detection falls back to a slow generic
// kernel. Loading the library lazily, after pinning the core type, keeps the
// fast path without requiring callers to set up their environment.
using SgemmFn = void (*)(int, int, int, int, int, int, float, const float*, int,
                         const float*, int, float, float*, int);
using DgemmFn = void (*)(int, int, int, int, int, int, double, const double*, int,
                         const double*, int, double, double*, int);

SgemmFn g_sgemm = nullptr;
DgemmFn g_dgemm = nullptr;
std::once_flag g_init_flag;
int g_threads = 0;

constexpr int kRowMajor = 101;
constexpr int kNoTrans = 111;
constexpr int kTrans = 112;

void do_init() {
  setenv("OPENBLAS_CORETYPE", "SKYLAKEX", /*overwrite=*/0);
  void* handle = dlopen("libopenblas.so.0", RTLD_NOW | RTLD_LOCAL);
  if (!handle) handle = dlopen("libopenblas.so", RTLD_NOW | RTLD_LOCAL);
  if (!handle) throw std::runtime_error("cannot load OpenBLAS: " + std::string(dlerror()));
  // Parallelism lives above the GEMM calls; BLAS itself stays single-threaded
  // so results do not depend on its scheduling.
  if (auto set_threads =
          reinterpret_cast<void (*)(int)>(dlsym(handle, "openblas_set_num_threads")))
    set_threads(1);
  g_sgemm = reinterpret_cast<SgemmFn>(dlsym(handle, "cblas_sgemm"));
  g_dgemm = reinterpret_cast<DgemmFn>(dlsym(handle, "cblas_dgemm"));
  if (!g_sgemm || !g_dgemm)
    throw std::runtime_error("OpenBLAS is missing cblas_sgemm/cblas_dgemm");
}

}  // namespace

void init_compute_backend() { std::call_once(g_init_flag, do_init); }

int compute_threads() {
  if (g_threads > 0) return g_threads;
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(std::min(hw, 8u));
}

void set_compute_threads(int threads) { g_threads = threads; }

void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha,
          const float* a, int lda, const float* b, int ldb, float beta, float* c,
          int ldc) {
  init_compute_backend();
  g_sgemm(kRowMajor, trans_a ? kTrans : kNoTrans, trans_b ? kTrans : kNoTrans, m, n,
          k, alpha, a, lda, b, ldb, beta, c, ldc);
}

void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha,
          const double* a, int lda, const double* b, int ldb, double beta, double* c,
          int ldc) {
  init_compute_backend();
  g_dgemm(kRowMajor, trans_a ? kTrans : kNoTrans, trans_b ? kTrans : kNoTrans, m, n,
          k, alpha, a, lda, b, ldb, beta, c, ldc);
}

}  // namespace shapeiq
