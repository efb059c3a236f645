#pragma once

#include <cstdint>

namespace kanbench::kernels {

// Dense double-precision kernels used by every layer in the project.
//
// All kernels are deterministic: the accumulation order of each output
// element is fixed by the loop structure, never by the thread count, so a
// run with OMP_NUM_THREADS=1 and OMP_NUM_THREADS=64 produces bit-identical
// results. The `ref` namespace holds naive serial implementations used as
// oracles in the kernel tests and in the benchmark target.

/// C[i,j] += sum_l A[i,l] * B[j,l]   (A: m x k, B: n x k, C: m x n)
void gemm_nt_acc(const double* A, const double* B, double* C,
                 std::int64_t m, std::int64_t n, std::int64_t k);

/// C[i,j] += sum_l A[i,l] * B[l,j]   (A: m x k, B: k x n, C: m x n)
void gemm_nn_acc(const double* A, const double* B, double* C,
                 std::int64_t m, std::int64_t n, std::int64_t k);

/// C[i,j] += sum_l A[l,i] * B[l,j]   (A: m x p, B: m x q, C: p x q)
void gemm_tn_acc(const double* A, const double* B, double* C,
                 std::int64_t p, std::int64_t q, std::int64_t m);

/// y[i] = x[i] * sigmoid(x[i])
void silu(const double* x, double* y, std::int64_t n);

/// dx[i] += g[i] * d/dx silu(x[i])
void silu_grad_acc(const double* x, const double* g, double* dx, std::int64_t n);

void add(const double* a, const double* b, double* out, std::int64_t n);
void sub(const double* a, const double* b, double* out, std::int64_t n);
void mul(const double* a, const double* b, double* out, std::int64_t n);
void scale(const double* a, double c, double* out, std::int64_t n);

/// out[i] += c * a[i]
void axpy(const double* a, double c, double* out, std::int64_t n);

/// Deterministic blocked sum (block partials combined in index order).
double sum(const double* a, std::int64_t n);

/// max_i |a[i]|; 0 for empty input.
double max_abs(const double* a, std::int64_t n);

bool all_finite(const double* a, std::int64_t n);

namespace ref {

void gemm_nt_acc(const double* A, const double* B, double* C,
                 std::int64_t m, std::int64_t n, std::int64_t k);
void gemm_nn_acc(const double* A, const double* B, double* C,
                 std::int64_t m, std::int64_t n, std::int64_t k);
void gemm_tn_acc(const double* A, const double* B, double* C,
                 std::int64_t p, std::int64_t q, std::int64_t m);
void silu(const double* x, double* y, std::int64_t n);
double sum(const double* a, std::int64_t n);

} // namespace ref

} // namespace kanbench::kernels
