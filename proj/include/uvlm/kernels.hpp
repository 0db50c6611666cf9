#pragma once

#include <cstddef>

namespace uvlm::kernels {

// Dense row-major matmul kernels. The serial versions are the reference;
// the OpenMP versions partition output rows so every output element is
// computed by exactly one thread in the same accumulation order, making the
// parallel result bitwise identical to the serial one.

// Work threshold (m*k*n) below which the parallel entry points fall back to
// the serial loop; tiny training-sized matmuls lose to thread overhead.
inline constexpr size_t kParallelFlopThreshold = 64 * 1024;

// c[m x n] = a[m x k] * b[k x n]
void matmul_serial(const double* a, const double* b, double* c,
                   size_t m, size_t k, size_t n);
void matmul_omp(const double* a, const double* b, double* c,
                size_t m, size_t k, size_t n);

// c[m x n] = a[m x k] * b[n x k]^T
void matmul_nt_serial(const double* a, const double* b, double* c,
                      size_t m, size_t k, size_t n);
void matmul_nt_omp(const double* a, const double* b, double* c,
                   size_t m, size_t k, size_t n);

// c[m x n] += a[k x m]^T * b[k x n]  (gradient accumulation path)
void matmul_tn_acc_serial(const double* a, const double* b, double* c,
                          size_t m, size_t k, size_t n);
void matmul_tn_acc_omp(const double* a, const double* b, double* c,
                       size_t m, size_t k, size_t n);

// Dispatchers used by the tensor ops: pick the OpenMP kernel when the
// problem is large enough, the serial kernel otherwise.
void matmul(const double* a, const double* b, double* c,
            size_t m, size_t k, size_t n);
void matmul_nt(const double* a, const double* b, double* c,
               size_t m, size_t k, size_t n);
void matmul_tn_acc(const double* a, const double* b, double* c,
                   size_t m, size_t k, size_t n);

}  // namespace uvlm::kernels
