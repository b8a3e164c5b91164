/*
 * Copyright (c) 2026 The DualCL Authors
 *
 * Licensed under the Apache License, Version 2.0;
 * You may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an 'AS IS' BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstdint>

// Low-level numeric kernels. The functions in dualcl::kernels are the ones
// the autodiff layer calls; they parallelize with OpenMP strictly over
// independent output rows (or columns, for cross-row reductions), so every
// output element is produced by one fixed serial loop regardless of the
// thread count. This keeps results bitwise reproducible while still using
// all cores.
//
// dualcl::kernels::ref holds naive single-loop reference implementations of
// the order-sensitive kernels. They are kept for testing and benchmarking
// only: tests compare the optimized kernels against them (with a small
// tolerance where the summation order legitimately differs) and
// bench_kernels measures the speedup.

namespace dualcl::kernels {

using std::int64_t;

// ---- dense matrix products (row-major) ------------------------------------
// accumulate=false overwrites C, accumulate=true adds into it.

// C[m,n] (+)= A[m,k] * B[k,n]
void gemm_nn(int64_t m, int64_t k, int64_t n, const double* a, const double* b,
             double* c, bool accumulate);

// C[m,n] (+)= A[m,k] * B[n,k]^T   (pairwise row dots)
void gemm_nt(int64_t m, int64_t k, int64_t n, const double* a, const double* b,
             double* c, bool accumulate);

// C[m,n] (+)= A[k,m]^T * B[k,n]
void gemm_tn(int64_t m, int64_t k, int64_t n, const double* a, const double* b,
             double* c, bool accumulate);

// ---- elementwise -----------------------------------------------------------

void add(int64_t n, const double* a, const double* b, double* out);
void sub(int64_t n, const double* a, const double* b, double* out);
void mul(int64_t n, const double* a, const double* b, double* out);
void scale(int64_t n, double c, const double* x, double* out);
// y += alpha * x
void axpy(int64_t n, double alpha, const double* x, double* y);
void vexp(int64_t n, const double* x, double* out);
void vlog(int64_t n, const double* x, double* out);
void vrelu(int64_t n, const double* x, double* out);
// dx += dy where x > 0
void relu_bwd(int64_t n, const double* x, const double* dy, double* dx);
// out += a .* b
void fma_acc(int64_t n, const double* a, const double* b, double* out);
// out += dy ./ x
void div_acc(int64_t n, const double* dy, const double* x, double* out);
// out[i] += c
void acc_const(int64_t n, double c, double* out);
// out = x + (1 - m) * (-1e9); m holds 0/1 indicators
void apply_mask(int64_t n, const double* x, const double* m, double* out);
// out[r,:] = a[r,:] + b[:]
void add_row_broadcast(int64_t rows, int64_t d, const double* a,
                       const double* b, double* out);

// ---- row-wise normalizations ------------------------------------------------

// Numerically stable softmax per row (max subtraction).
void softmax_rows_fwd(int64_t rows, int64_t d, const double* x, double* y);
// dx += y .* (dy - sum(dy .* y)) per row
void softmax_rows_bwd(int64_t rows, int64_t d, const double* y,
                      const double* dy, double* dx);

// y[r,:] = x[r,:] / ||x[r,:]||_2; norms[r] receives the norm.
void l2norm_rows_fwd(int64_t rows, int64_t d, const double* x, double* y,
                     double* norms);
// dx += (dy - y * dot(y, dy)) / norm per row
void l2norm_rows_bwd(int64_t rows, int64_t d, const double* y,
                     const double* norms, const double* dy, double* dx);

// Per-row layer normalization with learned gain/bias of width d.
// mean[r] and rstd[r] (1/sqrt(var + eps)) are saved for the backward pass.
inline constexpr double kLayerNormEps = 1e-5;
void layer_norm_rows_fwd(int64_t rows, int64_t d, const double* x,
                         const double* gain, const double* bias, double* y,
                         double* mean, double* rstd);
// dx/dgain/dbias all accumulate (+=).
void layer_norm_rows_bwd(int64_t rows, int64_t d, const double* x,
                         const double* gain, const double* mean,
                         const double* rstd, const double* dy, double* dx,
                         double* dgain, double* dbias);

// ---- reductions / indexed moves ---------------------------------------------

// Serial left-to-right sum (fixed order by construction).
double reduce_sum(int64_t n, const double* x);

// out[r,:] = src[idx[r],:] for r in [0, n_idx); src has d-wide rows.
void gather_rows(int64_t n_idx, int64_t d, const int64_t* idx,
                 const double* src, double* out);
// dst[idx[r],:] += src[r,:]; serial because indices may repeat.
void scatter_add_rows(int64_t n_idx, int64_t d, const int64_t* idx,
                      const double* src, double* dst);

// Fixed-order dot product of two length-n vectors (four unrolled
// accumulators, combined in a fixed order).
double dot(int64_t n, const double* a, const double* b);

namespace ref {
// Naive serial reference implementations (textbook triple loops / single
// accumulator sums). Used by tests and bench_kernels only.
void gemm_nn(int64_t m, int64_t k, int64_t n, const double* a, const double* b,
             double* c, bool accumulate);
void gemm_nt(int64_t m, int64_t k, int64_t n, const double* a, const double* b,
             double* c, bool accumulate);
void gemm_tn(int64_t m, int64_t k, int64_t n, const double* a, const double* b,
             double* c, bool accumulate);
void softmax_rows_fwd(int64_t rows, int64_t d, const double* x, double* y);
void l2norm_rows_fwd(int64_t rows, int64_t d, const double* x, double* y,
                     double* norms);
void layer_norm_rows_fwd(int64_t rows, int64_t d, const double* x,
                         const double* gain, const double* bias, double* y,
                         double* mean, double* rstd);
double reduce_sum(int64_t n, const double* x);
double dot(int64_t n, const double* a, const double* b);
}  // namespace ref

}  // namespace dualcl::kernels
