#include "uvlm/kernels.hpp"

#include <cstring>

namespace uvlm::kernels {

void matmul_serial(const double* a, const double* b, double* c,
                   size_t m, size_t k, size_t n) {
  std::memset(c, 0, m * n * sizeof(double));
  for (size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    double* ci = c + i * n;
    for (size_t p = 0; p < k; ++p) {
      double av = ai[p];
      const double* bp = b + p * n;
      for (size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

void matmul_omp(const double* a, const double* b, double* c,
                size_t m, size_t k, size_t n) {
#pragma omp parallel for schedule(static)
  for (long long ii = 0; ii < static_cast<long long>(m); ++ii) {
    size_t i = static_cast<size_t>(ii);
    const double* ai = a + i * k;
    double* ci = c + i * n;
    std::memset(ci, 0, n * sizeof(double));
    for (size_t p = 0; p < k; ++p) {
      double av = ai[p];
      const double* bp = b + p * n;
      for (size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

void matmul_nt_serial(const double* a, const double* b, double* c,
                      size_t m, size_t k, size_t n) {
  for (size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    double* ci = c + i * n;
    for (size_t j = 0; j < n; ++j) {
      const double* bj = b + j * k;
      double acc = 0.0;
      for (size_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
      ci[j] = acc;
    }
  }
}

void matmul_nt_omp(const double* a, const double* b, double* c,
                   size_t m, size_t k, size_t n) {
#pragma omp parallel for schedule(static)
  for (long long ii = 0; ii < static_cast<long long>(m); ++ii) {
    size_t i = static_cast<size_t>(ii);
    const double* ai = a + i * k;
    double* ci = c + i * n;
    for (size_t j = 0; j < n; ++j) {
      const double* bj = b + j * k;
      double acc = 0.0;
      for (size_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
      ci[j] = acc;
    }
  }
}

void matmul_tn_acc_serial(const double* a, const double* b, double* c,
                          size_t m, size_t k, size_t n) {
  for (size_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    for (size_t p = 0; p < k; ++p) {
      double av = a[p * m + i];
      const double* bp = b + p * n;
      for (size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

void matmul_tn_acc_omp(const double* a, const double* b, double* c,
                       size_t m, size_t k, size_t n) {
#pragma omp parallel for schedule(static)
  for (long long ii = 0; ii < static_cast<long long>(m); ++ii) {
    size_t i = static_cast<size_t>(ii);
    double* ci = c + i * n;
    for (size_t p = 0; p < k; ++p) {
      double av = a[p * m + i];
      const double* bp = b + p * n;
      for (size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

void matmul(const double* a, const double* b, double* c,
            size_t m, size_t k, size_t n) {
  if (m * k * n >= kParallelFlopThreshold) {
    matmul_omp(a, b, c, m, k, n);
  } else {
    matmul_serial(a, b, c, m, k, n);
  }
}

void matmul_nt(const double* a, const double* b, double* c,
               size_t m, size_t k, size_t n) {
  if (m * k * n >= kParallelFlopThreshold) {
    matmul_nt_omp(a, b, c, m, k, n);
  } else {
    matmul_nt_serial(a, b, c, m, k, n);
  }
}

void matmul_tn_acc(const double* a, const double* b, double* c,
                   size_t m, size_t k, size_t n) {
  if (m * k * n >= kParallelFlopThreshold) {
    matmul_tn_acc_omp(a, b, c, m, k, n);
  } else {
    matmul_tn_acc_serial(a, b, c, m, k, n);
  }
}

}  // namespace uvlm::kernels
