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

#include <algorithm>
#include <cmath>

#include "dualcl/kernels.hpp"

// Deliberately naive implementations: single accumulator, textbook loop
// order, no pragmas. These define the semantics the optimized kernels are
// tested against.

namespace dualcl::kernels::ref {

double dot(int64_t n, const double* a, const double* b) {
  double s = 0.0;
  for (int64_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

void gemm_nn(int64_t m, int64_t k, int64_t n, const double* a, const double* b,
             double* c, bool accumulate) {
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (int64_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
      c[i * n + j] = accumulate ? c[i * n + j] + s : s;
    }
  }
}

void gemm_nt(int64_t m, int64_t k, int64_t n, const double* a, const double* b,
             double* c, bool accumulate) {
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (int64_t p = 0; p < k; ++p) s += a[i * k + p] * b[j * k + p];
      c[i * n + j] = accumulate ? c[i * n + j] + s : s;
    }
  }
}

void gemm_tn(int64_t m, int64_t k, int64_t n, const double* a, const double* b,
             double* c, bool accumulate) {
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (int64_t p = 0; p < k; ++p) s += a[p * m + i] * b[p * n + j];
      c[i * n + j] = accumulate ? c[i * n + j] + s : s;
    }
  }
}

void softmax_rows_fwd(int64_t rows, int64_t d, const double* x, double* y) {
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
    for (int64_t j = 0; j < d; ++j) yr[j] /= sum;
  }
}

void l2norm_rows_fwd(int64_t rows, int64_t d, const double* x, double* y,
                     double* norms) {
  for (int64_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (int64_t j = 0; j < d; ++j) s += x[r * d + j] * x[r * d + j];
    const double nrm = std::sqrt(s);
    norms[r] = nrm;
    for (int64_t j = 0; j < d; ++j) y[r * d + j] = x[r * d + j] / nrm;
  }
}

void layer_norm_rows_fwd(int64_t rows, int64_t d, const double* x,
                         const double* gain, const double* bias, double* y,
                         double* mean, double* rstd) {
  for (int64_t r = 0; r < rows; ++r) {
    double mu = 0.0;
    for (int64_t j = 0; j < d; ++j) mu += x[r * d + j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (int64_t j = 0; j < d; ++j) {
      const double c = x[r * d + j] - mu;
      var += c * c;
    }
    var /= static_cast<double>(d);
    const double rs = 1.0 / std::sqrt(var + kLayerNormEps);
    mean[r] = mu;
    rstd[r] = rs;
    for (int64_t j = 0; j < d; ++j)
      y[r * d + j] = gain[j] * ((x[r * d + j] - mu) * rs) + bias[j];
  }
}

double reduce_sum(int64_t n, const double* x) {
  double s = 0.0;
  for (int64_t i = 0; i < n; ++i) s += x[i];
  return s;
}

}  // namespace dualcl::kernels::ref
