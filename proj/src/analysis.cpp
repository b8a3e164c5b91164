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

#include "dualcl/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "dualcl/objectives.hpp"
#include "dualcl/tape.hpp"

namespace dualcl {

namespace {

std::string fmt_full(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void require_rows(const Tensor& theta_star, const Tensor& z, const char* what) {
  if (theta_star.rank() != 2 || z.rank() != 2) {
    throw std::invalid_argument(std::string(what) + ": expected [N, d] inputs, got " +
                                shape_to_string(theta_star.shape) + " and " +
                                shape_to_string(z.shape));
  }
  if (theta_star.shape != z.shape) {
    throw std::invalid_argument(std::string(what) + ": shape mismatch, " +
                                shape_to_string(theta_star.shape) + " vs " +
                                shape_to_string(z.shape));
  }
}

double row_dot(const Tensor& a, std::int64_t i, const Tensor& b, std::int64_t j) {
  const std::int64_t d = a.shape[1];
  double s = 0.0;
  for (std::int64_t k = 0; k < d; ++k) {
    s += a.values[static_cast<std::size_t>(i * d + k)] *
         b.values[static_cast<std::size_t>(j * d + k)];
  }
  return s;
}

// Cyclic Jacobi eigendecomposition of a symmetric d x d matrix (row-major,
// destroyed in place). On return the diagonal of `a` holds eigenvalues and
// the columns of `v` the matching eigenvectors.
void jacobi_symmetric(std::vector<double>& a, const std::int64_t d, std::vector<double>& v) {
  v.assign(static_cast<std::size_t>(d * d), 0.0);
  for (std::int64_t i = 0; i < d; ++i) v[static_cast<std::size_t>(i * d + i)] = 1.0;

  for (int sweep = 0; sweep < 100; ++sweep) {
    double total = 0.0, off = 0.0;
    for (std::int64_t p = 0; p < d; ++p) {
      for (std::int64_t q = 0; q < d; ++q) {
        const double x = a[static_cast<std::size_t>(p * d + q)];
        total += x * x;
        if (p != q) off += x * x;
      }
    }
    if (off <= 1e-28 * std::max(1.0, total)) break;

    for (std::int64_t p = 0; p + 1 < d; ++p) {
      for (std::int64_t q = p + 1; q < d; ++q) {
        const double apq = a[static_cast<std::size_t>(p * d + q)];
        if (apq == 0.0) continue;
        const double app = a[static_cast<std::size_t>(p * d + p)];
        const double aqq = a[static_cast<std::size_t>(q * d + q)];
        const double theta = 0.5 * std::atan2(2.0 * apq, aqq - app);
        const double c = std::cos(theta), s = std::sin(theta);
        for (std::int64_t k = 0; k < d; ++k) {  // columns: A <- A G
          const double akp = a[static_cast<std::size_t>(k * d + p)];
          const double akq = a[static_cast<std::size_t>(k * d + q)];
          a[static_cast<std::size_t>(k * d + p)] = c * akp - s * akq;
          a[static_cast<std::size_t>(k * d + q)] = s * akp + c * akq;
        }
        for (std::int64_t k = 0; k < d; ++k) {  // rows: A <- G^T A
          const double apk = a[static_cast<std::size_t>(p * d + k)];
          const double aqk = a[static_cast<std::size_t>(q * d + k)];
          a[static_cast<std::size_t>(p * d + k)] = c * apk - s * aqk;
          a[static_cast<std::size_t>(q * d + k)] = s * apk + c * aqk;
        }
        for (std::int64_t k = 0; k < d; ++k) {  // accumulate V <- V G
          const double vkp = v[static_cast<std::size_t>(k * d + p)];
          const double vkq = v[static_cast<std::size_t>(k * d + q)];
          v[static_cast<std::size_t>(k * d + p)] = c * vkp - s * vkq;
          v[static_cast<std::size_t>(k * d + q)] = s * vkp + c * vkq;
        }
      }
    }
  }
}

const char* const kPalette[] = {"#4e79a7", "#e15759", "#59a14f", "#f28e2b",
                                "#b07aa1", "#76b7b2", "#edc948", "#9c755f"};
constexpr int kPaletteSize = 8;
constexpr double kCanvasW = 800.0, kCanvasH = 600.0;
constexpr double kMarginX = 40.0, kMarginY = 30.0;  // 5% of each canvas side

std::string fmt_coord(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

void check_mark_arrays(const std::vector<std::pair<double, double>>& coords,
                       const std::vector<int>& class_ids,
                       const std::vector<MarkKind>& kinds, const char* what) {
  if (coords.size() != class_ids.size() || coords.size() != kinds.size()) {
    throw std::invalid_argument(std::string(what) + ": parallel arrays differ in length (" +
                                std::to_string(coords.size()) + " coords, " +
                                std::to_string(class_ids.size()) + " class ids, " +
                                std::to_string(kinds.size()) + " kinds)");
  }
  for (std::size_t i = 0; i < coords.size(); ++i) {
    if (!std::isfinite(coords[i].first) || !std::isfinite(coords[i].second)) {
      throw std::invalid_argument(std::string(what) + ": non-finite coordinate at index " +
                                  std::to_string(i));
    }
    if (class_ids[i] < 0) {
      throw std::invalid_argument(std::string(what) + ": negative class id at index " +
                                  std::to_string(i));
    }
  }
}

}  // namespace

double psi(const Tensor& theta_star_i, const Tensor& z_j) {
  if (theta_star_i.rank() != 1 || z_j.rank() != 1 ||
      theta_star_i.shape[0] != z_j.shape[0]) {
    throw std::invalid_argument("psi: expected two vectors of equal length, got " +
                                shape_to_string(theta_star_i.shape) + " and " +
                                shape_to_string(z_j.shape));
  }
  double s = 0.0;
  for (std::size_t k = 0; k < theta_star_i.values.size(); ++k) {
    s += theta_star_i.values[k] * z_j.values[k];
  }
  return std::exp(s);
}

double phi(std::int64_t i, std::int64_t j, const Tensor& theta_star, const Tensor& z) {
  require_rows(theta_star, z, "phi");
  const std::int64_t n = theta_star.shape[0];
  if (i < 0 || i >= n || j < 0 || j >= n) {
    throw std::invalid_argument("phi: pair (" + std::to_string(i) + ", " + std::to_string(j) +
                                ") outside " + std::to_string(n) + " rows");
  }
  return 0.5 * (std::exp(row_dot(theta_star, i, z, j)) +
                std::exp(row_dot(theta_star, j, z, i)));
}

Tensor bound_joint(const Tensor& theta_star, const Tensor& z) {
  require_rows(theta_star, z, "bound_joint");
  const std::int64_t n = theta_star.shape[0];
  Tensor joint = Tensor::zeros({n, n});
  for (std::int64_t i = 0; i < n; ++i) {
    double row_sum = 0.0;
    std::vector<double> row(static_cast<std::size_t>(n));
    for (std::int64_t j = 0; j < n; ++j) {
      row[static_cast<std::size_t>(j)] = phi(i, j, theta_star, z);
      row_sum += row[static_cast<std::size_t>(j)];
    }
    for (std::int64_t j = 0; j < n; ++j) {
      joint.values[static_cast<std::size_t>(i * n + j)] =
          row[static_cast<std::size_t>(j)] / row_sum / static_cast<double>(n);
    }
  }
  return joint;
}

double exact_mi(const Tensor& joint) {
  if (joint.rank() != 2 || joint.shape[0] != joint.shape[1]) {
    throw std::invalid_argument("exact_mi: joint must be square, got " +
                                shape_to_string(joint.shape));
  }
  const std::int64_t n = joint.shape[0];
  double total = 0.0;
  for (const double p : joint.values) {
    if (!(p >= 0.0)) {
      throw std::invalid_argument("exact_mi: joint entries must be nonnegative");
    }
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-12) {
    throw std::invalid_argument("exact_mi: joint sums to " + fmt_full(total) +
                                ", expected 1");
  }

  std::vector<double> px(static_cast<std::size_t>(n), 0.0);
  std::vector<double> py(static_cast<std::size_t>(n), 0.0);
  for (std::int64_t i = 0; i < n; ++i) {
    for (std::int64_t j = 0; j < n; ++j) {
      const double p = joint.values[static_cast<std::size_t>(i * n + j)];
      px[static_cast<std::size_t>(i)] += p;
      py[static_cast<std::size_t>(j)] += p;
    }
  }
  double mi = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    for (std::int64_t j = 0; j < n; ++j) {
      const double p = joint.values[static_cast<std::size_t>(i * n + j)];
      if (p > 0.0) {
        mi += p * std::log(p / (px[static_cast<std::size_t>(i)] *
                                py[static_cast<std::size_t>(j)]));
      }
    }
  }
  // Nonnegative in exact arithmetic; clamp the floating-point residue.
  return std::max(0.0, mi);
}

BoundReport check_mi_bound(const Tensor& z, const Tensor& theta_star,
                           const std::vector<int>& labels) {
  require_rows(theta_star, z, "check_mi_bound");
  const std::int64_t n = z.shape[0];
  if (n < 2) {
    throw std::invalid_argument("check_mi_bound: need at least 2 examples, got " +
                                std::to_string(n));
  }
  if (static_cast<std::int64_t>(labels.size()) != n) {
    throw std::invalid_argument("check_mi_bound: got " + std::to_string(labels.size()) +
                                " labels for " + std::to_string(n) + " examples");
  }

  const Tensor joint = bound_joint(theta_star, z);

  BoundReport report;
  report.n = n;
  report.mi = exact_mi(joint);
  report.epsilon = joint.values[0];
  for (std::int64_t i = 0; i < n; ++i) {
    report.epsilon = std::min(report.epsilon, joint.values[static_cast<std::size_t>(i * n + i)]);
  }

  // Conditional p(j | i) is the row-normalized joint; the marginal over j is
  // the column sum. m_values[i] aggregates their ratios across j.
  std::vector<double> marginal(static_cast<std::size_t>(n), 0.0);
  for (std::int64_t i = 0; i < n; ++i) {
    for (std::int64_t j = 0; j < n; ++j) {
      marginal[static_cast<std::size_t>(j)] += joint.values[static_cast<std::size_t>(i * n + j)];
    }
  }
  report.m_values.assign(static_cast<std::size_t>(n), 0.0);
  for (std::int64_t i = 0; i < n; ++i) {
    double row_sum = 0.0;
    for (std::int64_t j = 0; j < n; ++j) {
      row_sum += joint.values[static_cast<std::size_t>(i * n + j)];
    }
    for (std::int64_t j = 0; j < n; ++j) {
      const double cond = joint.values[static_cast<std::size_t>(i * n + j)] / row_sum;
      report.m_values[static_cast<std::size_t>(i)] +=
          cond / marginal[static_cast<std::size_t>(j)];
    }
  }

  // Dual contrastive value at temperature 1 over the whole set; gradients
  // are irrelevant here, so the tape stays grad-free.
  Tape tape;
  Tensor z_const = z;
  Tensor theta_const = theta_star;
  z_const.requires_grad = false;
  theta_const.requires_grad = false;
  const Relations rel = build_relations(labels);
  report.l_dual = loss_dual(tape, tape.tensor(z_const), tape.tensor(theta_const), rel, 1.0).total;

  report.rhs = std::log(static_cast<double>(n)) - report.epsilon * report.l_dual;
  report.slack = report.mi - report.rhs;
  report.holds = report.slack >= -1e-12;
  return report;
}

std::string bound_report_text(const BoundReport& report) {
  std::string out;
  out += "n: " + std::to_string(report.n) + "\n";
  out += "mi: " + fmt_full(report.mi) + "\n";
  out += "epsilon: " + fmt_full(report.epsilon) + "\n";
  out += "l_dual: " + fmt_full(report.l_dual) + "\n";
  out += "rhs: " + fmt_full(report.rhs) + "\n";
  out += "slack: " + fmt_full(report.slack) + "\n";
  out += std::string("holds: ") + (report.holds ? "true" : "false") + "\n";
  out += "m_values:";
  for (const double m : report.m_values) out += " " + fmt_full(m);
  out += "\n";
  return out;
}

std::vector<double> attention_scores(const Tensor& hidden, const Tensor& cls_feature,
                                     const std::vector<std::int64_t>& sentence_positions) {
  if (hidden.rank() != 2) {
    throw std::invalid_argument("attention_scores: hidden must be [T, d], got " +
                                shape_to_string(hidden.shape));
  }
  if (cls_feature.rank() != 1 || cls_feature.shape[0] != hidden.shape[1]) {
    throw std::invalid_argument("attention_scores: reference feature shape " +
                                shape_to_string(cls_feature.shape) + " does not match width " +
                                std::to_string(hidden.shape[1]));
  }
  if (sentence_positions.empty()) {
    throw std::invalid_argument("attention_scores: empty sentence");
  }
  const std::int64_t t_count = hidden.shape[0];
  const std::int64_t d = hidden.shape[1];

  std::vector<double> dist;
  dist.reserve(sentence_positions.size());
  for (const std::int64_t t : sentence_positions) {
    if (t < 0 || t >= t_count) {
      throw std::invalid_argument("attention_scores: position " + std::to_string(t) +
                                  " outside " + std::to_string(t_count) + " tokens");
    }
    double sq = 0.0;
    for (std::int64_t k = 0; k < d; ++k) {
      const double diff = hidden.values[static_cast<std::size_t>(t * d + k)] -
                          cls_feature.values[static_cast<std::size_t>(k)];
      sq += diff * diff;
    }
    dist.push_back(std::sqrt(sq));
  }

  const auto [min_it, max_it] = std::minmax_element(dist.begin(), dist.end());
  const double lo = *min_it, hi = *max_it;
  std::vector<double> scores(dist.size(), 0.5);
  if (hi > lo) {
    for (std::size_t i = 0; i < dist.size(); ++i) {
      scores[i] = (hi - dist[i]) / (hi - lo);
    }
  }
  return scores;
}

Tensor project_2d(const Tensor& points) {
  if (points.rank() != 2) {
    throw std::invalid_argument("project_2d: expected [M, d] points, got " +
                                shape_to_string(points.shape));
  }
  const std::int64_t m = points.shape[0];
  const std::int64_t d = points.shape[1];
  if (d < 2) {
    throw std::invalid_argument("project_2d: need at least 2 dimensions, got " +
                                std::to_string(d));
  }
  if (m == 1) return Tensor::zeros({1, 2});

  std::vector<double> mean(static_cast<std::size_t>(d), 0.0);
  for (std::int64_t i = 0; i < m; ++i) {
    for (std::int64_t k = 0; k < d; ++k) {
      mean[static_cast<std::size_t>(k)] += points.values[static_cast<std::size_t>(i * d + k)];
    }
  }
  for (double& v : mean) v /= static_cast<double>(m);

  std::vector<double> centered(points.values.size());
  for (std::int64_t i = 0; i < m; ++i) {
    for (std::int64_t k = 0; k < d; ++k) {
      centered[static_cast<std::size_t>(i * d + k)] =
          points.values[static_cast<std::size_t>(i * d + k)] -
          mean[static_cast<std::size_t>(k)];
    }
  }

  std::vector<double> cov(static_cast<std::size_t>(d * d), 0.0);
  for (std::int64_t i = 0; i < m; ++i) {
    for (std::int64_t a = 0; a < d; ++a) {
      const double xa = centered[static_cast<std::size_t>(i * d + a)];
      for (std::int64_t b = 0; b < d; ++b) {
        cov[static_cast<std::size_t>(a * d + b)] +=
            xa * centered[static_cast<std::size_t>(i * d + b)];
      }
    }
  }
  for (double& v : cov) v /= static_cast<double>(m);

  std::vector<double> eigvec;
  jacobi_symmetric(cov, d, eigvec);

  std::vector<std::int64_t> order(static_cast<std::size_t>(d));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::int64_t a, std::int64_t b) {
    return cov[static_cast<std::size_t>(a * d + a)] > cov[static_cast<std::size_t>(b * d + b)];
  });

  Tensor coords = Tensor::zeros({m, 2});
  for (int axis = 0; axis < 2; ++axis) {
    const std::int64_t col = order[static_cast<std::size_t>(axis)];
    double sign = 1.0;
    for (std::int64_t k = 0; k < d; ++k) {
      const double e = eigvec[static_cast<std::size_t>(k * d + col)];
      if (std::abs(e) > 1e-12) {
        sign = e > 0.0 ? 1.0 : -1.0;
        break;
      }
    }
    for (std::int64_t i = 0; i < m; ++i) {
      double proj = 0.0;
      for (std::int64_t k = 0; k < d; ++k) {
        proj += centered[static_cast<std::size_t>(i * d + k)] *
                eigvec[static_cast<std::size_t>(k * d + col)];
      }
      coords.values[static_cast<std::size_t>(i * 2 + axis)] = sign * proj;
    }
  }
  return coords;
}

std::string render_svg_scatter(const std::vector<std::pair<double, double>>& coords,
                               const std::vector<int>& class_ids,
                               const std::vector<MarkKind>& kinds) {
  check_mark_arrays(coords, class_ids, kinds, "render_svg_scatter");

  double xmin = 0.0, xmax = 1.0, ymin = 0.0, ymax = 1.0;
  if (!coords.empty()) {
    xmin = xmax = coords[0].first;
    ymin = ymax = coords[0].second;
    for (const auto& [x, y] : coords) {
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    }
  }
  // Degenerate spans (a single point, or a collinear axis) widen into a unit
  // interval so the mapping stays finite and centered.
  if (!(xmax - xmin > 0.0)) {
    xmin -= 0.5;
    xmax += 0.5;
  }
  if (!(ymax - ymin > 0.0)) {
    ymin -= 0.5;
    ymax += 0.5;
  }

  const auto map_x = [&](double x) {
    return kMarginX + (x - xmin) / (xmax - xmin) * (kCanvasW - 2.0 * kMarginX);
  };
  const auto map_y = [&](double y) {  // SVG y grows downward
    return kCanvasH - kMarginY - (y - ymin) / (ymax - ymin) * (kCanvasH - 2.0 * kMarginY);
  };

  std::string out;
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"800\" height=\"600\" "
         "viewBox=\"0 0 800 600\">\n";
  out += "<rect width=\"800\" height=\"600\" fill=\"#ffffff\"/>\n";
  for (std::size_t i = 0; i < coords.size(); ++i) {
    const double px = map_x(coords[i].first);
    const double py = map_y(coords[i].second);
    const char* color = kPalette[class_ids[i] % kPaletteSize];
    if (kinds[i] == MarkKind::feature) {
      out += "<circle class=\"feature\" cx=\"" + fmt_coord(px) + "\" cy=\"" + fmt_coord(py) +
             "\" r=\"5\" fill=\"" + color + "\" fill-opacity=\"0.75\"/>\n";
    } else {
      out += "<path class=\"classifier\" d=\"M" + fmt_coord(px) + " " + fmt_coord(py - 7.0) +
             " L" + fmt_coord(px - 6.0) + " " + fmt_coord(py + 5.0) + " L" +
             fmt_coord(px + 6.0) + " " + fmt_coord(py + 5.0) + " Z\" fill=\"" + color +
             "\" stroke=\"#333333\" stroke-width=\"1\"/>\n";
    }
  }
  out += "</svg>\n";
  return out;
}

void emit_svg_scatter(const std::vector<std::pair<double, double>>& coords,
                      const std::vector<int>& class_ids,
                      const std::vector<MarkKind>& kinds, const std::string& path) {
  const std::string svg = render_svg_scatter(coords, class_ids, kinds);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("emit_svg_scatter: cannot open " + path);
  out.write(svg.data(), static_cast<std::streamsize>(svg.size()));
  out.flush();
  if (!out) throw std::runtime_error("emit_svg_scatter: write failed for " + path);
}

std::string representation_csv(const std::vector<std::pair<double, double>>& coords,
                               const std::vector<int>& class_ids,
                               const std::vector<MarkKind>& kinds,
                               const std::vector<std::string>& class_names) {
  check_mark_arrays(coords, class_ids, kinds, "representation_csv");
  std::string out = "index,label,kind,x,y\n";
  for (std::size_t i = 0; i < coords.size(); ++i) {
    if (class_ids[i] >= static_cast<int>(class_names.size())) {
      throw std::invalid_argument("representation_csv: class id " +
                                  std::to_string(class_ids[i]) + " has no name (have " +
                                  std::to_string(class_names.size()) + ")");
    }
    out += std::to_string(i) + "," + class_names[static_cast<std::size_t>(class_ids[i])] +
           "," + (kinds[i] == MarkKind::feature ? "feature" : "classifier") + "," +
           fmt_full(coords[i].first) + "," + fmt_full(coords[i].second) + "\n";
  }
  return out;
}

std::string attention_csv(const std::vector<std::string>& tokens,
                          const std::vector<double>& scores) {
  if (tokens.size() != scores.size()) {
    throw std::invalid_argument("attention_csv: " + std::to_string(tokens.size()) +
                                " tokens but " + std::to_string(scores.size()) + " scores");
  }
  std::string out = "token,score\n";
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    out += "\"";
    for (const char c : tokens[i]) {
      out += c;
      if (c == '"') out += '"';  // CSV escaping: double the quote
    }
    out += "\"," + fmt_full(scores[i]) + "\n";
  }
  return out;
}

}  // namespace dualcl
