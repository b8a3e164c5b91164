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

// Times the OpenMP compute kernels against their serial reference
// implementations and prints one table row per kernel: milliseconds per call
// for each, the speedup, and the largest element difference between the two
// results as a sanity check (summation-order differences keep it nonzero but
// tiny).

#ifdef _OPENMP
#include <omp.h>
#endif

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "dualcl/kernels.hpp"
#include "dualcl/rng.hpp"

namespace {

using dualcl::Rng;
namespace k = dualcl::kernels;

std::vector<double> random_vec(std::int64_t n, Rng& rng) {
  std::vector<double> v(static_cast<std::size_t>(n));
  for (double& x : v) x = rng.next_normal();
  return v;
}

// Minimum wall time over `reps` calls, in milliseconds.
double time_ms(const std::function<void()>& fn, int reps) {
  fn();  // warm up caches and the OpenMP thread pool
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const double ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
            .count();
    best = std::min(best, ms);
  }
  return best;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

void report(const std::string& name, double opt_ms, double ref_ms, double diff) {
  std::printf("%-22s %10.3f %10.3f %9.2fx %12.3g\n", name.c_str(), opt_ms, ref_ms,
              ref_ms / opt_ms, diff);
}

}  // namespace

int main() {
#ifdef _OPENMP
  std::printf("threads: %d\n", omp_get_max_threads());
#else
  std::printf("threads: 1 (built without OpenMP)\n");
#endif
  std::printf("%-22s %10s %10s %10s %12s\n", "kernel", "opt ms", "ref ms", "speedup",
              "max |diff|");

  Rng rng(42);
  const std::int64_t m = 256, kk = 256, n = 256;
  const std::vector<double> a = random_vec(m * kk, rng);
  const std::vector<double> b = random_vec(kk * n, rng);
  std::vector<double> c_opt(static_cast<std::size_t>(m * n));
  std::vector<double> c_ref(c_opt.size());

  report("gemm_nn 256^3",
         time_ms([&] { k::gemm_nn(m, kk, n, a.data(), b.data(), c_opt.data(), false); }, 5),
         time_ms([&] { k::ref::gemm_nn(m, kk, n, a.data(), b.data(), c_ref.data(), false); },
                 3),
         max_abs_diff(c_opt, c_ref));

  report("gemm_nt 256^3",
         time_ms([&] { k::gemm_nt(m, kk, n, a.data(), b.data(), c_opt.data(), false); }, 5),
         time_ms([&] { k::ref::gemm_nt(m, kk, n, a.data(), b.data(), c_ref.data(), false); },
                 3),
         max_abs_diff(c_opt, c_ref));

  report("gemm_tn 256^3",
         time_ms([&] { k::gemm_tn(m, kk, n, a.data(), b.data(), c_opt.data(), false); }, 5),
         time_ms([&] { k::ref::gemm_tn(m, kk, n, a.data(), b.data(), c_ref.data(), false); },
                 3),
         max_abs_diff(c_opt, c_ref));

  const std::int64_t rows = 4096, d = 256;
  const std::vector<double> x = random_vec(rows * d, rng);
  std::vector<double> y_opt(x.size()), y_ref(x.size());
  std::vector<double> aux_opt(static_cast<std::size_t>(rows));
  std::vector<double> aux_ref(aux_opt.size());

  report("softmax_rows 4096x256",
         time_ms([&] { k::softmax_rows_fwd(rows, d, x.data(), y_opt.data()); }, 10),
         time_ms([&] { k::ref::softmax_rows_fwd(rows, d, x.data(), y_ref.data()); }, 5),
         max_abs_diff(y_opt, y_ref));

  report("l2norm_rows 4096x256",
         time_ms([&] { k::l2norm_rows_fwd(rows, d, x.data(), y_opt.data(), aux_opt.data()); },
                 10),
         time_ms(
             [&] { k::ref::l2norm_rows_fwd(rows, d, x.data(), y_ref.data(), aux_ref.data()); },
             5),
         max_abs_diff(y_opt, y_ref));

  const std::vector<double> gain = random_vec(d, rng);
  const std::vector<double> bias = random_vec(d, rng);
  std::vector<double> mean_opt(static_cast<std::size_t>(rows)), rstd_opt(mean_opt.size());
  std::vector<double> mean_ref(mean_opt.size()), rstd_ref(mean_opt.size());
  report("layer_norm_rows 4096x256",
         time_ms(
             [&] {
               k::layer_norm_rows_fwd(rows, d, x.data(), gain.data(), bias.data(),
                                      y_opt.data(), mean_opt.data(), rstd_opt.data());
             },
             10),
         time_ms(
             [&] {
               k::ref::layer_norm_rows_fwd(rows, d, x.data(), gain.data(), bias.data(),
                                           y_ref.data(), mean_ref.data(), rstd_ref.data());
             },
             5),
         max_abs_diff(y_opt, y_ref));

  const std::int64_t len = 1 << 22;
  const std::vector<double> u = random_vec(len, rng);
  const std::vector<double> v = random_vec(len, rng);
  double s_opt = 0.0, s_ref = 0.0;
  report("reduce_sum 4M",
         time_ms([&] { s_opt = k::reduce_sum(len, u.data()); }, 10),
         time_ms([&] { s_ref = k::ref::reduce_sum(len, u.data()); }, 5),
         std::fabs(s_opt - s_ref));
  report("dot 4M", time_ms([&] { s_opt = k::dot(len, u.data(), v.data()); }, 10),
         time_ms([&] { s_ref = k::ref::dot(len, u.data(), v.data()); }, 5),
         std::fabs(s_opt - s_ref));

  return 0;
}
