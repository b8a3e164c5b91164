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

#include "dualcl/objectives.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "dualcl/kernels.hpp"

namespace dualcl {

namespace {

void require_positive_tau(double tau, const char* what) {
  if (!(tau > 0.0)) {
    throw std::invalid_argument(std::string(what) + ": temperature must be positive, got " +
                                std::to_string(tau));
  }
}

// Shared core of the contrastive losses. `sim` is the [N, N] similarity
// matrix with sim[i][j] = anchor_i . candidate_j. Every off-diagonal entry
// belongs to A_i; `positives` selects P_i per anchor. Works entirely on
// probabilities: the diagonal is pushed to -1e9 before the softmax (its
// probability underflows to exact zero), and non-positive entries are
// remapped to 1 before the log so only P_i contributes.
LossValue contrastive_mean(Tape& tape, TensorId sim,
                           const std::vector<std::vector<int>>& positives, double tau,
                           const char* what) {
  require_positive_tau(tau, what);
  const Tensor& s = tape.value(sim);
  if (s.rank() != 2 || s.shape[0] != s.shape[1]) {
    throw std::invalid_argument(std::string(what) + ": similarity matrix must be square, got " +
                                shape_to_string(s.shape));
  }
  const std::int64_t n = s.shape[0];
  if (static_cast<std::int64_t>(positives.size()) != n) {
    throw std::invalid_argument(std::string(what) + ": positive sets cover " +
                                std::to_string(positives.size()) + " anchors for batch " +
                                std::to_string(n));
  }

  std::vector<double> contrast(static_cast<std::size_t>(n * n), 1.0);
  std::vector<double> pos(static_cast<std::size_t>(n * n), 0.0);
  std::vector<double> fill(static_cast<std::size_t>(n * n), 1.0);
  std::vector<double> weight(static_cast<std::size_t>(n * n), 0.0);
  int skipped = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    contrast[static_cast<std::size_t>(i * n + i)] = 0.0;
    if (positives[static_cast<std::size_t>(i)].empty()) {
      ++skipped;
      continue;
    }
    const double inv = 1.0 / static_cast<double>(positives[static_cast<std::size_t>(i)].size());
    for (const int p : positives[static_cast<std::size_t>(i)]) {
      if (p < 0 || p >= n || p == i) {
        throw std::invalid_argument(std::string(what) + ": positive index " +
                                    std::to_string(p) + " invalid for anchor " +
                                    std::to_string(i));
      }
      pos[static_cast<std::size_t>(i * n + p)] = 1.0;
      fill[static_cast<std::size_t>(i * n + p)] = 0.0;
      weight[static_cast<std::size_t>(i * n + p)] = inv;
    }
  }
  const int active = static_cast<int>(n) - skipped;

  const TensorId scaled = tape.scalar_mul(sim, 1.0 / tau);
  const TensorId masked =
      tape.apply_mask(scaled, tape.tensor({n, n}, contrast, /*requires_grad=*/false));
  const TensorId probs = tape.softmax_rows(masked);
  // padj = probs where positive, 1 elsewhere, so log(padj) vanishes off P_i.
  const TensorId padj =
      tape.add(tape.mul_elem(probs, tape.tensor({n, n}, pos, /*requires_grad=*/false)),
               tape.tensor({n, n}, fill, /*requires_grad=*/false));
  const TensorId weighted =
      tape.mul_elem(tape.log(padj), tape.tensor({n, n}, weight, /*requires_grad=*/false));
  const double scale = active > 0 ? -static_cast<double>(n * n) / active : 0.0;
  const TensorId handle = tape.scalar_mul(tape.mean_all(weighted), scale);

  LossValue out;
  out.handle = handle;
  out.total = tape.value(handle).values[0];
  out.skipped = skipped;
  out.per_anchor.assign(static_cast<std::size_t>(n), 0.0);
  const std::vector<double>& pv = tape.value(probs).values;
  for (std::int64_t i = 0; i < n; ++i) {
    const auto& pi = positives[static_cast<std::size_t>(i)];
    if (pi.empty()) continue;
    double sum = 0.0;
    for (const int p : pi) sum -= std::log(pv[static_cast<std::size_t>(i * n + p)]);
    out.per_anchor[static_cast<std::size_t>(i)] = sum / static_cast<double>(pi.size());
  }
  return out;
}

void require_feature_matrix(const Tensor& z, const char* what) {
  if (z.rank() != 2) {
    throw std::invalid_argument(std::string(what) + ": features must be rank 2, got " +
                                shape_to_string(z.shape));
  }
}

}  // namespace

Relations build_relations(const std::vector<int>& labels) {
  if (labels.empty()) throw std::invalid_argument("build_relations: empty batch");
  const int n = static_cast<int>(labels.size());
  Relations rel;
  rel.contrast.resize(labels.size());
  rel.positives.resize(labels.size());
  for (int i = 0; i < n; ++i) {
    if (labels[static_cast<std::size_t>(i)] < 0) {
      throw std::invalid_argument("build_relations: negative label at index " +
                                  std::to_string(i));
    }
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      rel.contrast[static_cast<std::size_t>(i)].push_back(j);
      if (labels[static_cast<std::size_t>(j)] == labels[static_cast<std::size_t>(i)]) {
        rel.positives[static_cast<std::size_t>(i)].push_back(j);
      }
    }
  }
  return rel;
}

LossValue loss_self(Tape& tape, TensorId z, const std::vector<int>& pairing, double tau) {
  require_feature_matrix(tape.value(z), "loss_self");
  const std::int64_t n = tape.value(z).shape[0];
  if (static_cast<std::int64_t>(pairing.size()) != n) {
    throw std::invalid_argument("loss_self: pairing covers " + std::to_string(pairing.size()) +
                                " of " + std::to_string(n) + " examples");
  }
  std::vector<std::vector<int>> positives(pairing.size());
  for (std::int64_t i = 0; i < n; ++i) {
    const int j = pairing[static_cast<std::size_t>(i)];
    if (j < 0 || j >= n || j == i || pairing[static_cast<std::size_t>(j)] != i) {
      throw std::invalid_argument("loss_self: pairing is not a fixed-point-free involution at " +
                                  std::to_string(i));
    }
    positives[static_cast<std::size_t>(i)] = {j};
  }
  return contrastive_mean(tape, tape.dot_rows(z, z), positives, tau, "loss_self");
}

LossValue loss_sup(Tape& tape, TensorId z, const Relations& rel, double tau) {
  require_feature_matrix(tape.value(z), "loss_sup");
  return contrastive_mean(tape, tape.dot_rows(z, z), rel.positives, tau, "loss_sup");
}

LossValue loss_z(Tape& tape, TensorId z, TensorId theta_star, const Relations& rel,
                 double tau) {
  require_feature_matrix(tape.value(z), "loss_z");
  // sim[i][j] = theta_j* . z_i
  return contrastive_mean(tape, tape.dot_rows(z, theta_star), rel.positives, tau, "loss_z");
}

LossValue loss_theta(Tape& tape, TensorId z, TensorId theta_star, const Relations& rel,
                     double tau) {
  require_feature_matrix(tape.value(z), "loss_theta");
  // sim[i][j] = theta_i* . z_j
  return contrastive_mean(tape, tape.dot_rows(theta_star, z), rel.positives, tau,
                          "loss_theta");
}

LossValue loss_dual(Tape& tape, TensorId z, TensorId theta_star, const Relations& rel,
                    double tau) {
  const LossValue feature_half = loss_z(tape, z, theta_star, rel, tau);
  const LossValue classifier_half = loss_theta(tape, z, theta_star, rel, tau);
  LossValue out;
  out.handle = tape.add(feature_half.handle, classifier_half.handle);
  out.total = tape.value(out.handle).values[0];
  out.skipped = feature_half.skipped;
  out.per_anchor.resize(feature_half.per_anchor.size());
  for (std::size_t i = 0; i < out.per_anchor.size(); ++i) {
    out.per_anchor[i] = feature_half.per_anchor[i] + classifier_half.per_anchor[i];
  }
  return out;
}

LossValue loss_ce_modified(Tape& tape, TensorId z, TensorId theta_b3,
                           const std::vector<int>& labels) {
  const Tensor& zt = tape.value(z);
  const Tensor& th = tape.value(theta_b3);
  require_feature_matrix(zt, "loss_ce_modified");
  if (th.rank() != 3 || th.shape[0] != zt.shape[0] || th.shape[2] != zt.shape[1]) {
    throw std::invalid_argument("loss_ce_modified: classifier shape " +
                                shape_to_string(th.shape) + " does not match features " +
                                shape_to_string(zt.shape));
  }
  const std::int64_t b = zt.shape[0];
  const std::int64_t k = th.shape[1];
  if (static_cast<std::int64_t>(labels.size()) != b) {
    throw std::invalid_argument("loss_ce_modified: got " + std::to_string(labels.size()) +
                                " labels for batch " + std::to_string(b));
  }
  std::vector<double> pos(static_cast<std::size_t>(b * k), 0.0);
  std::vector<double> fill(static_cast<std::size_t>(b * k), 1.0);
  for (std::int64_t i = 0; i < b; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= k) {
      throw std::invalid_argument("loss_ce_modified: label " + std::to_string(y) +
                                  " out of range for " + std::to_string(k) + " classes");
    }
    pos[static_cast<std::size_t>(i * k + y)] = 1.0;
    fill[static_cast<std::size_t>(i * k + y)] = 0.0;
  }

  std::vector<std::int64_t> rows(static_cast<std::size_t>(b));
  for (std::int64_t i = 0; i < b; ++i) rows[static_cast<std::size_t>(i)] = i;
  // logits[i][k] = theta_i^k . z_i, via one batched row-dot against a
  // [B, 1, d] view of z.
  const TensorId z_rows = tape.gather_rows(z, rows, {b, 1});
  const TensorId logits = tape.gather_rows(tape.dot_rows(z_rows, theta_b3), rows, {b});
  const TensorId probs = tape.softmax_rows(logits);
  const TensorId padj =
      tape.add(tape.mul_elem(probs, tape.tensor({b, k}, pos, /*requires_grad=*/false)),
               tape.tensor({b, k}, fill, /*requires_grad=*/false));
  const TensorId picked =
      tape.mul_elem(tape.log(padj), tape.tensor({b, k}, pos, /*requires_grad=*/false));
  const TensorId handle = tape.scalar_mul(tape.mean_all(picked), -static_cast<double>(k));

  LossValue out;
  out.handle = handle;
  out.total = tape.value(handle).values[0];
  out.skipped = 0;
  out.per_anchor.assign(static_cast<std::size_t>(b), 0.0);
  const std::vector<double>& pv = tape.value(probs).values;
  for (std::int64_t i = 0; i < b; ++i) {
    const std::int64_t y = labels[static_cast<std::size_t>(i)];
    out.per_anchor[static_cast<std::size_t>(i)] =
        -std::log(pv[static_cast<std::size_t>(i * k + y)]);
  }
  return out;
}

LossValue loss_overall(Tape& tape, const LossValue& ce, const LossValue& dual,
                       double lambda) {
  if (lambda < 0.0) {
    throw std::invalid_argument("loss_overall: lambda must be nonnegative, got " +
                                std::to_string(lambda));
  }
  if (ce.handle < 0 || dual.handle < 0) {
    throw std::invalid_argument("loss_overall: component losses carry no tape handle");
  }
  if (ce.per_anchor.size() != dual.per_anchor.size()) {
    throw std::invalid_argument("loss_overall: component breakdowns cover " +
                                std::to_string(ce.per_anchor.size()) + " vs " +
                                std::to_string(dual.per_anchor.size()) + " anchors");
  }
  LossValue out;
  out.handle = tape.add(ce.handle, tape.scalar_mul(dual.handle, lambda));
  out.total = tape.value(out.handle).values[0];
  out.skipped = dual.skipped;
  out.per_anchor.resize(ce.per_anchor.size());
  for (std::size_t i = 0; i < out.per_anchor.size(); ++i) {
    out.per_anchor[i] = ce.per_anchor[i] + lambda * dual.per_anchor[i];
  }
  return out;
}

std::vector<int> predict(const Tensor& z, const Tensor& theta_b3) {
  if (z.rank() != 2 || theta_b3.rank() != 3 || theta_b3.shape[0] != z.shape[0] ||
      theta_b3.shape[2] != z.shape[1]) {
    throw std::invalid_argument("predict: incompatible shapes " + shape_to_string(z.shape) +
                                " and " + shape_to_string(theta_b3.shape));
  }
  const std::int64_t b = z.shape[0];
  const std::int64_t k = theta_b3.shape[1];
  const std::int64_t d = z.shape[1];
  std::vector<int> out(static_cast<std::size_t>(b));
  for (std::int64_t i = 0; i < b; ++i) {
    int best = 0;
    double best_score = 0.0;
    for (std::int64_t c = 0; c < k; ++c) {
      const double score = kernels::dot(d, z.values.data() + i * d,
                                        theta_b3.values.data() + (i * k + c) * d);
      if (c == 0 || score > best_score) {
        best = static_cast<int>(c);
        best_score = score;
      }
    }
    out[static_cast<std::size_t>(i)] = best;
  }
  return out;
}

}  // namespace dualcl
