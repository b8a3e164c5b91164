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

#include <vector>

#include "dualcl/tape.hpp"

namespace dualcl {

// Loss functions over dual representations. All contrastive losses share
// the same anchor structure: for anchor i the contrastive set A_i is the
// whole batch minus i, and the positive set P_i is the subset of A_i with
// the anchor's label. Anchors whose P_i is empty are skipped and excluded
// from the averaging denominator. Representations are expected to arrive
// unit-normalized (the encoder normalizes on-tape); the losses do not
// re-normalize.

struct Relations {
  std::vector<std::vector<int>> contrast;   // A_i, ascending, i excluded
  std::vector<std::vector<int>> positives;  // P_i ⊆ A_i, ascending

  std::size_t size() const { return contrast.size(); }
};

// Builds A_i / P_i from 0-based labels. Throws std::invalid_argument on an
// empty batch or negative labels.
Relations build_relations(const std::vector<int>& labels);

// One loss evaluation. `handle` is the scalar tape node (differentiable);
// `total` is its value. `per_anchor` holds each anchor's mean term (0 for
// skipped anchors) and `skipped` counts anchors excluded from the mean, so
// total == sum(per_anchor) / (size - skipped) whenever any anchor is live.
struct LossValue {
  double total = 0.0;
  TensorId handle = -1;
  std::vector<double> per_anchor;
  int skipped = 0;
};

// Self-supervised contrastive loss. `pairing` is a fixed-point-free
// involution (j(j(i)) == i, j(i) != i) marking each anchor's augmented
// view; every other batch member acts as a negative:
//   mean_i -log( exp(z_i.z_{j(i)}/tau) / sum_{a in A_i} exp(z_i.z_a/tau) )
LossValue loss_self(Tape& tape, TensorId z, const std::vector<int>& pairing, double tau);

// Supervised contrastive loss over features:
//   mean_i (1/|P_i|) sum_{p in P_i}
//     -log( exp(z_i.z_p/tau) / sum_{a in A_i} exp(z_i.z_a/tau) )
LossValue loss_sup(Tape& tape, TensorId z, const Relations& rel, double tau);

// Feature-anchored half of the dual loss: anchor z_i against the batch's
// true-label classifier columns theta_star ([N, d], row j = theta_j^{y_j}):
//   term(i, p) = -log( exp(theta_p*.z_i/tau) / sum_{a in A_i} exp(theta_a*.z_i/tau) )
LossValue loss_z(Tape& tape, TensorId z, TensorId theta_star, const Relations& rel,
                 double tau);

// Classifier-anchored half: anchor theta_i* against the batch's features:
//   term(i, p) = -log( exp(theta_i*.z_p/tau) / sum_{a in A_i} exp(theta_i*.z_a/tau) )
LossValue loss_theta(Tape& tape, TensorId z, TensorId theta_star, const Relations& rel,
                     double tau);

// Sum of the two halves above, sharing one set of skip decisions.
LossValue loss_dual(Tape& tape, TensorId z, TensorId theta_star, const Relations& rel,
                    double tau);

// Cross-entropy against each example's own classifier (no temperature):
//   mean_i -log( exp(theta_i^{y_i}.z_i) / sum_k exp(theta_i^k.z_i) )
// theta_b3 is [B, K, d]; z is [B, d].
LossValue loss_ce_modified(Tape& tape, TensorId z, TensorId theta_b3,
                           const std::vector<int>& labels);

// Training objective: ce + lambda * dual (lambda >= 0). Per-anchor entries
// combine the two component breakdowns; `skipped` is inherited from the
// dual term.
LossValue loss_overall(Tape& tape, const LossValue& ce, const LossValue& dual,
                       double lambda);

// Per-example prediction: argmax_k theta_i^k . z_i, ties resolved toward
// the lowest class id. Pure value computation (no tape).
std::vector<int> predict(const Tensor& z, const Tensor& theta_b3);

}  // namespace dualcl
