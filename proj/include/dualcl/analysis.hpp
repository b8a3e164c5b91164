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
#include <string>
#include <utility>
#include <vector>

#include "dualcl/tensor.hpp"

namespace dualcl {

// ---- mutual-information diagnostics --------------------------------------------
//
// The dual contrastive value admits an information-theoretic reading: pairing
// each example's feature with every example's classifier summary induces a
// joint distribution over (example, label-assignment) pairs, and the negated
// loss lower-bounds that joint's mutual information up to a data-dependent
// constant. check_mi_bound evaluates every quantity in that statement on a
// concrete batch and reports whether the inequality actually holds there; it
// is a diagnostic, not an assertion, because admissible degenerate inputs
// (e.g. two identical same-class examples) make the bound fail.

// exp of the alignment between one classifier summary and one feature.
// Both arguments are rank-1 vectors of the same length.
double psi(const Tensor& theta_star_i, const Tensor& z_j);

// Symmetrized pair score (psi(i,j) + psi(j,i)) / 2 over row i of theta_star
// and row j of z (both [N, d]). phi(i, j, ...) == phi(j, i, ...) exactly.
double phi(std::int64_t i, std::int64_t j, const Tensor& theta_star, const Tensor& z);

// Joint distribution induced by the pair scores: uniform over examples,
// conditional proportional to phi within each row —
// p[i, j] = (1/N) * phi(i, j) / sum_t phi(i, t). Returns an [N, N] tensor
// whose rows each sum to 1/N.
Tensor bound_joint(const Tensor& theta_star, const Tensor& z);

// Mutual information (nats) of a square joint distribution with entries
// >= 0 summing to 1 (within 1e-12), computed against its exact marginals
// with the convention 0 * log 0 = 0. Throws std::invalid_argument on an
// invalid joint.
double exact_mi(const Tensor& joint);

struct BoundReport {
  std::int64_t n = 0;     // number of examples in the evaluated set
  double mi = 0.0;        // exact mutual information of the constructed joint
  double epsilon = 0.0;   // smallest diagonal entry p[i, i]
  double l_dual = 0.0;    // dual contrastive value at temperature 1
  double rhs = 0.0;       // log n - epsilon * l_dual
  double slack = 0.0;     // mi - rhs
  bool holds = false;     // slack >= -1e-12
  // Per-example sums over j of p(j | i) / p(j): the conditional-to-marginal
  // probability ratios the bound's derivation aggregates.
  std::vector<double> m_values;
};

// Builds the joint from the representations, evaluates the mutual
// information, the minimum diagonal probability, and the dual contrastive
// value (temperature 1, whole set as one batch, anchors without positives
// skipped), and reports all derived quantities. Requires N >= 2 rows and
// one label per row. Unit-norm rows are expected but not enforced.
BoundReport check_mi_bound(const Tensor& z, const Tensor& theta_star,
                           const std::vector<int>& labels);

// Plain-text rendering of a report, one "key: value" line per field.
std::string bound_report_text(const BoundReport& report);

// ---- attention map --------------------------------------------------------------

// Relevance of each sentence token to a reference feature: the l2 distance
// d_t from hidden row t to cls_feature, rescaled per sentence to
// (max d - d_t) / (max d - min d) so the closest token scores 1 and the
// farthest 0; when all distances coincide every score is 0.5. hidden is
// [T, d], cls_feature is [d], and sentence_positions selects the rows to
// score (must be nonempty, each in [0, T)). The result aligns with
// sentence_positions.
std::vector<double> attention_scores(const Tensor& hidden, const Tensor& cls_feature,
                                     const std::vector<std::int64_t>& sentence_positions);

// ---- 2-D projection -------------------------------------------------------------

// Principal-component projection of an [M, d] point cloud (d >= 2) onto the
// top-2 eigenvectors of its covariance, eigenvalues descending. Points are
// mean-centered first; a single point maps to the origin. Deterministic sign
// convention: each eigenvector's first nonzero component is positive.
Tensor project_2d(const Tensor& points);

// ---- exports --------------------------------------------------------------------

enum class MarkKind { feature, classifier };

// Fixed 800x600 canvas with a 5% margin and a linear coordinate mapping.
// Features render as circles and classifiers as triangles, filled by class
// color. Inputs are parallel arrays; empty inputs produce a valid SVG with
// zero marks. Output bytes are a deterministic function of the inputs.
std::string render_svg_scatter(const std::vector<std::pair<double, double>>& coords,
                               const std::vector<int>& class_ids,
                               const std::vector<MarkKind>& kinds);

// Renders and writes the scatter to `path`. Throws std::runtime_error when
// the file cannot be written.
void emit_svg_scatter(const std::vector<std::pair<double, double>>& coords,
                      const std::vector<int>& class_ids,
                      const std::vector<MarkKind>& kinds, const std::string& path);

// "index,label,kind,x,y" rows; the label column carries class_names[id].
std::string representation_csv(const std::vector<std::pair<double, double>>& coords,
                               const std::vector<int>& class_ids,
                               const std::vector<MarkKind>& kinds,
                               const std::vector<std::string>& class_names);

// "token,score" rows; tokens are double-quoted (embedded quotes doubled) so
// punctuation tokens — including the comma — stay parseable.
std::string attention_csv(const std::vector<std::string>& tokens,
                          const std::vector<double>& scores);

}  // namespace dualcl
