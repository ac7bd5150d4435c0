#include "blas.hpp"

#include <cblas.h>

#include <cmath>
#include <random>
#include <vector>

namespace paramisp::blas {

namespace {

template <class T>
void reference_gemm(bool ta, bool tb, int m, int n, int k, T alpha, const T* a, int lda, const T* b, int ldb, T beta,
                    T* c, int ldc) {
  for (int i = 0; i < m; ++i) {
    T* crow = c + static_cast<long>(i) * ldc;
    for (int j = 0; j < n; ++j) crow[j] = beta == T(0) ? T(0) : beta * crow[j];
    if (tb) {
      for (int j = 0; j < n; ++j) {
        const T* bcol = b + static_cast<long>(j) * ldb;
        T s = 0;
        for (int p = 0; p < k; ++p) s += (ta ? a[static_cast<long>(p) * lda + i] : a[static_cast<long>(i) * lda + p]) * bcol[p];
        crow[j] += alpha * s;
      }
    } else {
      for (int p = 0; p < k; ++p) {
        const T aip = alpha * (ta ? a[static_cast<long>(p) * lda + i] : a[static_cast<long>(i) * lda + p]);
        if (aip == T(0)) continue;
        const T* brow = b + static_cast<long>(p) * ldb;
        for (int j = 0; j < n; ++j) crow[j] += aip * brow[j];
      }
    }
  }
}

void system_gemm(bool ta, bool tb, int m, int n, int k, float alpha, const float* a, int lda, const float* b, int ldb,
                 float beta, float* c, int ldc) {
  cblas_sgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda,
              b, ldb, beta, c, ldc);
}

void system_gemm(bool ta, bool tb, int m, int n, int k, double alpha, const double* a, int lda, const double* b,
                 int ldb, double beta, double* c, int ldc) {
  cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda,
              b, ldb, beta, c, ldc);
}

// Shapes resembling the convolution workloads, where broken vendor kernels have been seen.
template <class T>
bool self_test() {
  std::mt19937 rng(12345);
  std::uniform_real_distribution<double> u(-1, 1);
  const int shapes[][3] = {{4, 512, 864}, {64, 512, 36}, {4, 256, 9}, {16, 1024, 288}, {3, 7, 5}};
  for (const auto& s : shapes)
    for (int t = 0; t < 4; ++t) {
      const bool ta = t & 1, tb = t & 2;
      const int m = s[0], n = s[1], k = s[2];
      std::vector<T> a(static_cast<size_t>(m) * k), b(static_cast<size_t>(k) * n), c(static_cast<size_t>(m) * n);
      for (auto& x : a) x = static_cast<T>(u(rng));
      for (auto& x : b) x = static_cast<T>(u(rng));
      for (auto& x : c) x = static_cast<T>(u(rng));
      std::vector<T> r = c;
      const int lda = ta ? m : k, ldb = tb ? k : n;
      system_gemm(ta, tb, m, n, k, T(1), a.data(), lda, b.data(), ldb, T(1), c.data(), n);
      reference_gemm(ta, tb, m, n, k, T(1), a.data(), lda, b.data(), ldb, T(1), r.data(), n);
      const double tol = (sizeof(T) == 4 ? 1e-4 : 1e-10) * std::sqrt(static_cast<double>(k)) + 1e-12;
      for (size_t i = 0; i < c.size(); ++i)
        if (!(std::abs(static_cast<double>(c[i]) - static_cast<double>(r[i])) <= tol)) return false;
    }
  return true;
}

template <class T>
bool checked() {
  static const bool ok = self_test<T>();
  return ok;
}

}  // namespace

bool system_gemm_ok(bool double_precision) { return double_precision ? checked<double>() : checked<float>(); }

void gemm(bool ta, bool tb, int m, int n, int k, float alpha, const float* a, int lda, const float* b, int ldb,
          float beta, float* c, int ldc) {
  if (checked<float>()) system_gemm(ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
  else reference_gemm(ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

void gemm(bool ta, bool tb, int m, int n, int k, double alpha, const double* a, int lda, const double* b, int ldb,
          double beta, double* c, int ldc) {
  if (checked<double>()) system_gemm(ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
  else reference_gemm(ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

}  // namespace paramisp::blas
