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
#include <functional>
#include <unordered_map>
#include <vector>

#include "dualcl/tensor.hpp"

namespace dualcl {

// Reverse-mode automatic differentiation over a per-step tape.
//
// Usage pattern: create a fresh Tape for every optimization step, register
// leaves with tensor(), build the graph with the primitive methods, call
// backward(loss) exactly once, then discard the tape. The node list is
// already topologically ordered because ids are handed out in construction
// order, so backward is a single reverse sweep.
//
// Error conventions:
//   std::invalid_argument  - malformed shapes, bad arguments, unknown ids
//   std::domain_error      - log of a non-positive value, zero-norm rows
//   std::runtime_error     - non-finite results, reuse of a consumed tape
//
// Determinism: all numeric work is delegated to dualcl::kernels, whose
// parallel loops only split independent output elements; gradient
// accumulation happens in fixed reverse-topological order. Results are
// bitwise identical regardless of thread count.

using TensorId = std::int32_t;

enum class OpKind {
  leaf,
  matmul,
  add,
  sub,
  mul_elem,
  scalar_mul,
  exp,
  log,
  relu,
  dot_rows,
  softmax_rows,
  l2norm_rows,
  mean_all,
  gather_rows,
  concat_rows,
  layer_norm_rows,
  apply_mask,
};

const char* op_name(OpKind op);

// Gradients of one backward pass, keyed by leaf id. Only leaves registered
// with requires_grad=true appear; leaves the loss does not reach get
// all-zero gradients of the right shape.
class GradientMap {
 public:
  bool contains(TensorId id) const { return grads_.count(id) != 0; }
  const Tensor& at(TensorId id) const;
  void insert(TensorId id, Tensor grad) { grads_.emplace(id, std::move(grad)); }
  std::size_t size() const { return grads_.size(); }

 private:
  std::unordered_map<TensorId, Tensor> grads_;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // ---- leaves --------------------------------------------------------------
  TensorId tensor(std::vector<std::int64_t> shape, std::vector<double> values,
                  bool requires_grad);
  TensorId tensor(const Tensor& t);
  // Scalar constant of shape [1].
  TensorId scalar(double v);

  // ---- primitives ------------------------------------------------------------
  // C = A * B. Shapes: [m,k]x[k,n] -> [m,n]; [B,m,k]x[k,n] -> [B,m,n]
  // (shared right operand); [B,m,k]x[B,k,n] -> [B,m,n].
  TensorId matmul(TensorId a, TensorId b);
  // Elementwise sum; also supports broadcasting a rank-1 [d] right operand
  // over the trailing axis of a higher-rank left operand.
  TensorId add(TensorId a, TensorId b);
  TensorId sub(TensorId a, TensorId b);
  TensorId mul_elem(TensorId a, TensorId b);
  TensorId scalar_mul(TensorId a, double c);
  TensorId exp(TensorId a);
  TensorId log(TensorId a);
  TensorId relu(TensorId a);
  // Pairwise row dot products: [m,d]x[n,d] -> [m,n] with out[i,j] = a_i . b_j;
  // batched [B,m,d]x[B,n,d] -> [B,m,n].
  TensorId dot_rows(TensorId a, TensorId b);
  // Softmax over the trailing axis (max-subtracted).
  TensorId softmax_rows(TensorId a);
  // Rows rescaled to unit Euclidean norm (trailing axis).
  TensorId l2norm_rows(TensorId a);
  // Mean of all elements -> shape [1].
  TensorId mean_all(TensorId a);
  // Rows of `src` (viewed as [rows, last_dim]) selected by index. The output
  // shape is index_shape ++ [last_dim]; index_shape defaults to
  // [indices.size()]. Duplicate indices are allowed; their gradients
  // accumulate.
  TensorId gather_rows(TensorId src, const std::vector<std::int64_t>& indices,
                       std::vector<std::int64_t> index_shape = {});
  // Concatenation along axis 0. All parts must share rank and trailing dims.
  TensorId concat_rows(const std::vector<TensorId>& parts);
  // Per-row layer normalization over the trailing axis with learned gain and
  // bias of shape [d].
  TensorId layer_norm_rows(TensorId x, TensorId gain, TensorId bias);
  // x + (1 - mask) * (-1e9), elementwise; mask entries must be 0 or 1 and the
  // mask must not require gradients. Gradient passes through unchanged.
  TensorId apply_mask(TensorId x, TensorId mask);

  // Generic dispatcher for the attribute-free primitives above. Ops that
  // need extra arguments (scalar_mul, gather_rows) reject dispatch.
  TensorId apply(OpKind op, const std::vector<TensorId>& inputs);

  // ---- backward --------------------------------------------------------------
  // Seeds d(loss)/d(loss) = 1 and sweeps the tape in reverse. `loss` must
  // hold exactly one element. The tape is consumed: any further use throws.
  GradientMap backward(TensorId loss);

  // ---- inspection ------------------------------------------------------------
  const Tensor& value(TensorId id) const;
  std::int64_t size() const { return static_cast<std::int64_t>(nodes_.size()); }
  bool consumed() const { return consumed_; }

 private:
  struct Node {
    OpKind op = OpKind::leaf;
    std::vector<TensorId> inputs;
    bool requires_grad = false;
    Tensor value;
    double scalar_c = 0.0;               // scalar_mul
    std::vector<std::int64_t> indices;   // gather_rows
    std::vector<double> aux;             // saved statistics for backward
  };

  TensorId push(Node node, const char* op);
  const Node& node_at(TensorId id) const;
  void require_live(const char* op) const;
  void check_ids(const std::vector<TensorId>& ids, const char* op) const;

  std::vector<Node> nodes_;
  bool consumed_ = false;
};

// Bernoulli dropout mask with inverted scaling: entries are 0 with
// probability `rate` and 1/(1-rate) otherwise, so the expected value of
// mask .* x equals x. rate must lie in [0, 1).
Tensor dropout_mask(std::vector<std::int64_t> shape, double rate,
                    std::uint64_t seed);

// ---- finite differences -------------------------------------------------------

struct FdReport {
  double max_rel_err = 0.0;  // max over all checked elements
  std::int64_t checked = 0;  // number of scalar derivatives compared
  double tol = 0.0;
  bool pass = false;
};

// A graph builder: given a fresh tape and the leaf ids (registered in the
// order the leaves were supplied), returns the loss id. Must be a pure
// function of the leaf values (pass dropout masks in as leaves).
using GraphFn = std::function<TensorId(Tape&, const std::vector<TensorId>&)>;

// Compares backward() gradients of every requires_grad leaf against central
// finite differences (loss(x+h) - loss(x-h)) / (2h), element by element.
// Relative error uses max(1e-12, |analytic|, |numeric|) as denominator.
FdReport finite_difference_check(const GraphFn& fn, const std::vector<Tensor>& leaves,
                                 double h, double tol);

}  // namespace dualcl
