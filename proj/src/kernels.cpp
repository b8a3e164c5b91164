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

#include "dualcl/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

// Parallelization policy: every `omp parallel for` below iterates over
// output rows (or output columns for the gain/bias reductions), and the body
// computes each output element with one serial loop. No OpenMP reductions
// are used anywhere, so results do not depend on the number of threads.

namespace dualcl::kernels {

namespace {
// Parallelizing tiny loops costs more than it saves.
constexpr int64_t kRowGrain = 8;
constexpr int64_t kElemGrain = 4096;
}  // namespace

double dot(int64_t n, const double* a, const double* b) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  int64_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

void gemm_nn(int64_t m, int64_t k, int64_t n, const double* a, const double* b,
             double* c, bool accumulate) {
#pragma omp parallel for if (m >= kRowGrain) schedule(static)
  for (int64_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    if (!accumulate) std::memset(crow, 0, sizeof(double) * static_cast<std::size_t>(n));
    const double* arow = a + i * k;
    for (int64_t p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = b + p * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void gemm_nt(int64_t m, int64_t k, int64_t n, const double* a, const double* b,
             double* c, bool accumulate) {
#pragma omp parallel for if (m >= kRowGrain) schedule(static)
  for (int64_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (int64_t j = 0; j < n; ++j) {
      const double v = dot(k, arow, b + j * k);
      crow[j] = accumulate ? crow[j] + v : v;
    }
  }
}

void gemm_tn(int64_t m, int64_t k, int64_t n, const double* a, const double* b,
             double* c, bool accumulate) {
#pragma omp parallel for if (m >= kRowGrain) schedule(static)
  for (int64_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    if (!accumulate) std::memset(crow, 0, sizeof(double) * static_cast<std::size_t>(n));
    for (int64_t p = 0; p < k; ++p) {
      const double av = a[p * m + i];
      const double* brow = b + p * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void add(int64_t n, const double* a, const double* b, double* out) {
#pragma omp parallel for if (n >= kElemGrain) schedule(static)
  for (int64_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void sub(int64_t n, const double* a, const double* b, double* out) {
#pragma omp parallel for if (n >= kElemGrain) schedule(static)
  for (int64_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

void mul(int64_t n, const double* a, const double* b, double* out) {
#pragma omp parallel for if (n >= kElemGrain) schedule(static)
  for (int64_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void scale(int64_t n, double c, const double* x, double* out) {
#pragma omp parallel for if (n >= kElemGrain) schedule(static)
  for (int64_t i = 0; i < n; ++i) out[i] = c * x[i];
}

void axpy(int64_t n, double alpha, const double* x, double* y) {
#pragma omp parallel for if (n >= kElemGrain) schedule(static)
  for (int64_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void vexp(int64_t n, const double* x, double* out) {
#pragma omp parallel for if (n >= kElemGrain) schedule(static)
  for (int64_t i = 0; i < n; ++i) out[i] = std::exp(x[i]);
}

void vlog(int64_t n, const double* x, double* out) {
#pragma omp parallel for if (n >= kElemGrain) schedule(static)
  for (int64_t i = 0; i < n; ++i) out[i] = std::log(x[i]);
}

void vrelu(int64_t n, const double* x, double* out) {
#pragma omp parallel for if (n >= kElemGrain) schedule(static)
  for (int64_t i = 0; i < n; ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_bwd(int64_t n, const double* x, const double* dy, double* dx) {
#pragma omp parallel for if (n >= kElemGrain) schedule(static)
  for (int64_t i = 0; i < n; ++i) {
    if (x[i] > 0.0) dx[i] += dy[i];
  }
}

void fma_acc(int64_t n, const double* a, const double* b, double* out) {
#pragma omp parallel for if (n >= kElemGrain) schedule(static)
  for (int64_t i = 0; i < n; ++i) out[i] += a[i] * b[i];
}

void div_acc(int64_t n, const double* dy, const double* x, double* out) {
#pragma omp parallel for if (n >= kElemGrain) schedule(static)
  for (int64_t i = 0; i < n; ++i) out[i] += dy[i] / x[i];
}

void acc_const(int64_t n, double c, double* out) {
#pragma omp parallel for if (n >= kElemGrain) schedule(static)
  for (int64_t i = 0; i < n; ++i) out[i] += c;
}

void apply_mask(int64_t n, const double* x, const double* m, double* out) {
#pragma omp parallel for if (n >= kElemGrain) schedule(static)
  for (int64_t i = 0; i < n; ++i) out[i] = x[i] + (1.0 - m[i]) * -1e9;
}

void add_row_broadcast(int64_t rows, int64_t d, const double* a,
                       const double* b, double* out) {
#pragma omp parallel for if (rows >= kRowGrain) schedule(static)
  for (int64_t r = 0; r < rows; ++r) {
    const double* arow = a + r * d;
    double* orow = out + r * d;
    for (int64_t j = 0; j < d; ++j) orow[j] = arow[j] + b[j];
  }
}

void softmax_rows_fwd(int64_t rows, int64_t d, const double* x, double* y) {
#pragma omp parallel for if (rows >= kRowGrain) schedule(static)
  for (int64_t r = 0; r < rows; ++r) {
    const double* xr = x + r * d;
    double* yr = y + r * d;
    double mx = xr[0];
    for (int64_t j = 1; j < d; ++j) mx = std::max(mx, xr[j]);
    double sum = 0.0;
    for (int64_t j = 0; j < d; ++j) {
      yr[j] = std::exp(xr[j] - mx);
      sum += yr[j];
    }
    const double inv = 1.0 / sum;
    for (int64_t j = 0; j < d; ++j) yr[j] *= inv;
  }
}

void softmax_rows_bwd(int64_t rows, int64_t d, const double* y,
                      const double* dy, double* dx) {
#pragma omp parallel for if (rows >= kRowGrain) schedule(static)
  for (int64_t r = 0; r < rows; ++r) {
    const double* yr = y + r * d;
    const double* dyr = dy + r * d;
    double* dxr = dx + r * d;
    double inner = 0.0;
    for (int64_t j = 0; j < d; ++j) inner += dyr[j] * yr[j];
    for (int64_t j = 0; j < d; ++j) dxr[j] += yr[j] * (dyr[j] - inner);
  }
}

void l2norm_rows_fwd(int64_t rows, int64_t d, const double* x, double* y,
                     double* norms) {
#pragma omp parallel for if (rows >= kRowGrain) schedule(static)
  for (int64_t r = 0; r < rows; ++r) {
    const double* xr = x + r * d;
    double* yr = y + r * d;
    const double nrm = std::sqrt(dot(d, xr, xr));
    norms[r] = nrm;
    const double inv = 1.0 / nrm;  // caller rejects zero-norm rows
    for (int64_t j = 0; j < d; ++j) yr[j] = xr[j] * inv;
  }
}

void l2norm_rows_bwd(int64_t rows, int64_t d, const double* y,
                     const double* norms, const double* dy, double* dx) {
#pragma omp parallel for if (rows >= kRowGrain) schedule(static)
  for (int64_t r = 0; r < rows; ++r) {
    const double* yr = y + r * d;
    const double* dyr = dy + r * d;
    double* dxr = dx + r * d;
    const double inner = dot(d, yr, dyr);
    const double inv = 1.0 / norms[r];
    for (int64_t j = 0; j < d; ++j) dxr[j] += (dyr[j] - yr[j] * inner) * inv;
  }
}

void layer_norm_rows_fwd(int64_t rows, int64_t d, const double* x,
                         const double* gain, const double* bias, double* y,
                         double* mean, double* rstd) {
#pragma omp parallel for if (rows >= kRowGrain) schedule(static)
  for (int64_t r = 0; r < rows; ++r) {
    const double* xr = x + r * d;
    double* yr = y + r * d;
    double mu = 0.0;
    for (int64_t j = 0; j < d; ++j) mu += xr[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (int64_t j = 0; j < d; ++j) {
      const double c = xr[j] - mu;
      var += c * c;
    }
    var /= static_cast<double>(d);
    const double rs = 1.0 / std::sqrt(var + kLayerNormEps);
    mean[r] = mu;
    rstd[r] = rs;
    for (int64_t j = 0; j < d; ++j) yr[j] = gain[j] * ((xr[j] - mu) * rs) + bias[j];
  }
}

void layer_norm_rows_bwd(int64_t rows, int64_t d, const double* x,
                         const double* gain, const double* mean,
                         const double* rstd, const double* dy, double* dx,
                         double* dgain, double* dbias) {
  // dx: rows are independent.
#pragma omp parallel for if (rows >= kRowGrain) schedule(static)
  for (int64_t r = 0; r < rows; ++r) {
    const double* xr = x + r * d;
    const double* dyr = dy + r * d;
    double* dxr = dx + r * d;
    const double mu = mean[r];
    const double rs = rstd[r];
    double sum_dxhat = 0.0;
    double sum_dxhat_xhat = 0.0;
    for (int64_t j = 0; j < d; ++j) {
      const double xhat = (xr[j] - mu) * rs;
      const double dxhat = dyr[j] * gain[j];
      sum_dxhat += dxhat;
      sum_dxhat_xhat += dxhat * xhat;
    }
    const double inv_d = 1.0 / static_cast<double>(d);
    for (int64_t j = 0; j < d; ++j) {
      const double xhat = (xr[j] - mu) * rs;
      const double dxhat = dyr[j] * gain[j];
      dxr[j] += rs * (dxhat - inv_d * sum_dxhat - xhat * inv_d * sum_dxhat_xhat);
    }
  }
  // dgain/dbias: reductions over rows, parallelized over columns so each
  // output element is one serial sum.
#pragma omp parallel for if (d >= kRowGrain) schedule(static)
  for (int64_t j = 0; j < d; ++j) {
    double dg = 0.0, db = 0.0;
    for (int64_t r = 0; r < rows; ++r) {
      const double xhat = (x[r * d + j] - mean[r]) * rstd[r];
      const double g = dy[r * d + j];
      dg += g * xhat;
      db += g;
    }
    dgain[j] += dg;
    dbias[j] += db;
  }
}

double reduce_sum(int64_t n, const double* x) {
  double s = 0.0;
  for (int64_t i = 0; i < n; ++i) s += x[i];
  return s;
}

void gather_rows(int64_t n_idx, int64_t d, const int64_t* idx,
                 const double* src, double* out) {
#pragma omp parallel for if (n_idx >= kRowGrain) schedule(static)
  for (int64_t r = 0; r < n_idx; ++r) {
    std::memcpy(out + r * d, src + idx[r] * d,
                sizeof(double) * static_cast<std::size_t>(d));
  }
}

void scatter_add_rows(int64_t n_idx, int64_t d, const int64_t* idx,
                      const double* src, double* dst) {
  // Serial: duplicate indices must accumulate in a fixed order.
  for (int64_t r = 0; r < n_idx; ++r) {
    double* drow = dst + idx[r] * d;
    const double* srow = src + r * d;
    for (int64_t j = 0; j < d; ++j) drow[j] += srow[j];
  }
}

}  // namespace dualcl::kernels
