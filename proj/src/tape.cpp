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

#include "dualcl/tape.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>
#include <string>

#include "dualcl/kernels.hpp"
#include "dualcl/rng.hpp"

namespace dualcl {

namespace k = kernels;

const char* op_name(OpKind op) {
  switch (op) {
    case OpKind::leaf: return "leaf";
    case OpKind::matmul: return "matmul";
    case OpKind::add: return "add";
    case OpKind::sub: return "sub";
    case OpKind::mul_elem: return "mul_elem";
    case OpKind::scalar_mul: return "scalar_mul";
    case OpKind::exp: return "exp";
    case OpKind::log: return "log";
    case OpKind::relu: return "relu";
    case OpKind::dot_rows: return "dot_rows";
    case OpKind::softmax_rows: return "softmax_rows";
    case OpKind::l2norm_rows: return "l2norm_rows";
    case OpKind::mean_all: return "mean_all";
    case OpKind::gather_rows: return "gather_rows";
    case OpKind::concat_rows: return "concat_rows";
    case OpKind::layer_norm_rows: return "layer_norm_rows";
    case OpKind::apply_mask: return "apply_mask";
  }
  return "unknown";
}

const Tensor& GradientMap::at(TensorId id) const {
  const auto it = grads_.find(id);
  if (it == grads_.end()) {
    throw std::invalid_argument("GradientMap: no gradient recorded for tensor id " +
                                std::to_string(id));
  }
  return it->second;
}

namespace {

bool all_finite(const std::vector<double>& v) {
  for (const double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

void validate_new_shape(const std::vector<std::int64_t>& shape, const char* where) {
  if (shape.empty() || shape.size() > 3) {
    throw std::invalid_argument(std::string(where) + ": rank must be 1 to 3, got shape " +
                                shape_to_string(shape));
  }
  for (const auto d : shape) {
    if (d < 1) {
      throw std::invalid_argument(std::string(where) + ": dimensions must be positive, got shape " +
                                  shape_to_string(shape));
    }
  }
}

}  // namespace

void Tape::require_live(const char* op) const {
  if (consumed_) {
    throw std::runtime_error(std::string(op) +
                             ": tape consumed by backward; build a fresh tape");
  }
}

const Tape::Node& Tape::node_at(TensorId id) const {
  if (id < 0 || id >= static_cast<TensorId>(nodes_.size())) {
    throw std::invalid_argument("tape: unknown tensor id " + std::to_string(id));
  }
  return nodes_[static_cast<std::size_t>(id)];
}

void Tape::check_ids(const std::vector<TensorId>& ids, const char* op) const {
  for (const TensorId id : ids) {
    if (id < 0 || id >= static_cast<TensorId>(nodes_.size())) {
      throw std::invalid_argument(std::string(op) + ": unknown tensor id " +
                                  std::to_string(id));
    }
  }
}

TensorId Tape::push(Node node, const char* op) {
  if (!all_finite(node.value.values)) {
    throw std::runtime_error(std::string("non-finite value produced by ") + op);
  }
  nodes_.push_back(std::move(node));
  return static_cast<TensorId>(nodes_.size() - 1);
}

TensorId Tape::tensor(std::vector<std::int64_t> shape, std::vector<double> values,
                      bool requires_grad) {
  require_live("tensor");
  validate_new_shape(shape, "tensor");
  std::int64_t n = 1;
  for (const auto d : shape) n *= d;
  if (static_cast<std::int64_t>(values.size()) != n) {
    throw std::invalid_argument("tensor: value count " + std::to_string(values.size()) +
                                " does not match shape " + shape_to_string(shape));
  }
  if (!all_finite(values)) {
    throw std::invalid_argument("tensor: values contain a non-finite entry");
  }
  Node nd;
  nd.op = OpKind::leaf;
  nd.requires_grad = requires_grad;
  nd.value = Tensor::from(std::move(shape), std::move(values), requires_grad);
  nodes_.push_back(std::move(nd));
  return static_cast<TensorId>(nodes_.size() - 1);
}

TensorId Tape::tensor(const Tensor& t) {
  return tensor(t.shape, t.values, t.requires_grad);
}

TensorId Tape::scalar(double v) { return tensor({1}, {v}, false); }

// ---- binary matrix products ---------------------------------------------------

TensorId Tape::matmul(TensorId a, TensorId b) {
  require_live("matmul");
  check_ids({a, b}, "matmul");
  const Tensor& A = node_at(a).value;
  const Tensor& B = node_at(b).value;
  if (A.rank() < 2 || B.rank() < 2 || (A.rank() == 2 && B.rank() == 3)) {
    throw std::invalid_argument("matmul: unsupported ranks " + shape_to_string(A.shape) +
                                " x " + shape_to_string(B.shape));
  }
  const std::int64_t m = A.shape[A.rank() - 2];
  const std::int64_t kk = A.shape[A.rank() - 1];
  const std::int64_t n = B.shape[B.rank() - 1];
  if (B.shape[B.rank() - 2] != kk) {
    throw std::invalid_argument("matmul: shape mismatch " + shape_to_string(A.shape) + " x " +
                                shape_to_string(B.shape));
  }
  const std::int64_t batch = A.rank() == 3 ? A.shape[0] : 1;
  if (A.rank() == 3 && B.rank() == 3 && B.shape[0] != batch) {
    throw std::invalid_argument("matmul: batch mismatch " + shape_to_string(A.shape) + " x " +
                                shape_to_string(B.shape));
  }

  Node nd;
  nd.op = OpKind::matmul;
  nd.inputs = {a, b};
  nd.requires_grad = node_at(a).requires_grad || node_at(b).requires_grad;
  nd.value = Tensor::zeros(A.rank() == 3 ? std::vector<std::int64_t>{batch, m, n}
                                         : std::vector<std::int64_t>{m, n});
  const std::int64_t b_stride = B.rank() == 3 ? kk * n : 0;
  for (std::int64_t s = 0; s < batch; ++s) {
    k::gemm_nn(m, kk, n, A.values.data() + s * m * kk, B.values.data() + s * b_stride,
               nd.value.values.data() + s * m * n, false);
  }
  return push(std::move(nd), "matmul");
}

TensorId Tape::dot_rows(TensorId a, TensorId b) {
  require_live("dot_rows");
  check_ids({a, b}, "dot_rows");
  const Tensor& A = node_at(a).value;
  const Tensor& B = node_at(b).value;
  if (A.rank() < 2 || A.rank() != B.rank()) {
    throw std::invalid_argument("dot_rows: unsupported ranks " + shape_to_string(A.shape) +
                                " x " + shape_to_string(B.shape));
  }
  const std::int64_t d = A.shape[A.rank() - 1];
  if (B.shape[B.rank() - 1] != d || (A.rank() == 3 && A.shape[0] != B.shape[0])) {
    throw std::invalid_argument("dot_rows: shape mismatch " + shape_to_string(A.shape) + " x " +
                                shape_to_string(B.shape));
  }
  const std::int64_t m = A.shape[A.rank() - 2];
  const std::int64_t n = B.shape[B.rank() - 2];
  const std::int64_t batch = A.rank() == 3 ? A.shape[0] : 1;

  Node nd;
  nd.op = OpKind::dot_rows;
  nd.inputs = {a, b};
  nd.requires_grad = node_at(a).requires_grad || node_at(b).requires_grad;
  nd.value = Tensor::zeros(A.rank() == 3 ? std::vector<std::int64_t>{batch, m, n}
                                         : std::vector<std::int64_t>{m, n});
  for (std::int64_t s = 0; s < batch; ++s) {
    k::gemm_nt(m, d, n, A.values.data() + s * m * d, B.values.data() + s * n * d,
               nd.value.values.data() + s * m * n, false);
  }
  return push(std::move(nd), "dot_rows");
}

// ---- elementwise ----------------------------------------------------------------

TensorId Tape::add(TensorId a, TensorId b) {
  require_live("add");
  check_ids({a, b}, "add");
  const Tensor& A = node_at(a).value;
  const Tensor& B = node_at(b).value;
  const bool broadcast = A.shape != B.shape;
  if (broadcast && (B.rank() != 1 || A.rank() < 2 || A.last_dim() != B.shape[0])) {
    throw std::invalid_argument("add: shape mismatch " + shape_to_string(A.shape) + " vs " +
                                shape_to_string(B.shape));
  }
  Node nd;
  nd.op = OpKind::add;
  nd.inputs = {a, b};
  nd.requires_grad = node_at(a).requires_grad || node_at(b).requires_grad;
  nd.value = Tensor::zeros(A.shape);
  if (broadcast) {
    k::add_row_broadcast(A.row_count(), A.last_dim(), A.values.data(), B.values.data(),
                         nd.value.values.data());
  } else {
    k::add(A.numel(), A.values.data(), B.values.data(), nd.value.values.data());
  }
  return push(std::move(nd), "add");
}

TensorId Tape::sub(TensorId a, TensorId b) {
  require_live("sub");
  check_ids({a, b}, "sub");
  const Tensor& A = node_at(a).value;
  const Tensor& B = node_at(b).value;
  if (A.shape != B.shape) {
    throw std::invalid_argument("sub: shape mismatch " + shape_to_string(A.shape) + " vs " +
                                shape_to_string(B.shape));
  }
  Node nd;
  nd.op = OpKind::sub;
  nd.inputs = {a, b};
  nd.requires_grad = node_at(a).requires_grad || node_at(b).requires_grad;
  nd.value = Tensor::zeros(A.shape);
  k::sub(A.numel(), A.values.data(), B.values.data(), nd.value.values.data());
  return push(std::move(nd), "sub");
}

TensorId Tape::mul_elem(TensorId a, TensorId b) {
  require_live("mul_elem");
  check_ids({a, b}, "mul_elem");
  const Tensor& A = node_at(a).value;
  const Tensor& B = node_at(b).value;
  if (A.shape != B.shape) {
    throw std::invalid_argument("mul_elem: shape mismatch " + shape_to_string(A.shape) +
                                " vs " + shape_to_string(B.shape));
  }
  Node nd;
  nd.op = OpKind::mul_elem;
  nd.inputs = {a, b};
  nd.requires_grad = node_at(a).requires_grad || node_at(b).requires_grad;
  nd.value = Tensor::zeros(A.shape);
  k::mul(A.numel(), A.values.data(), B.values.data(), nd.value.values.data());
  return push(std::move(nd), "mul_elem");
}

TensorId Tape::scalar_mul(TensorId a, double c) {
  require_live("scalar_mul");
  check_ids({a}, "scalar_mul");
  if (!std::isfinite(c)) {
    throw std::invalid_argument("scalar_mul: coefficient must be finite");
  }
  const Tensor& A = node_at(a).value;
  Node nd;
  nd.op = OpKind::scalar_mul;
  nd.inputs = {a};
  nd.requires_grad = node_at(a).requires_grad;
  nd.scalar_c = c;
  nd.value = Tensor::zeros(A.shape);
  k::scale(A.numel(), c, A.values.data(), nd.value.values.data());
  return push(std::move(nd), "scalar_mul");
}

TensorId Tape::exp(TensorId a) {
  require_live("exp");
  check_ids({a}, "exp");
  const Tensor& A = node_at(a).value;
  Node nd;
  nd.op = OpKind::exp;
  nd.inputs = {a};
  nd.requires_grad = node_at(a).requires_grad;
  nd.value = Tensor::zeros(A.shape);
  k::vexp(A.numel(), A.values.data(), nd.value.values.data());
  return push(std::move(nd), "exp");
}

TensorId Tape::log(TensorId a) {
  require_live("log");
  check_ids({a}, "log");
  const Tensor& A = node_at(a).value;
  for (const double v : A.values) {
    if (v <= 0.0) {
      throw std::domain_error("log: non-positive input");
    }
  }
  Node nd;
  nd.op = OpKind::log;
  nd.inputs = {a};
  nd.requires_grad = node_at(a).requires_grad;
  nd.value = Tensor::zeros(A.shape);
  k::vlog(A.numel(), A.values.data(), nd.value.values.data());
  return push(std::move(nd), "log");
}

TensorId Tape::relu(TensorId a) {
  require_live("relu");
  check_ids({a}, "relu");
  const Tensor& A = node_at(a).value;
  Node nd;
  nd.op = OpKind::relu;
  nd.inputs = {a};
  nd.requires_grad = node_at(a).requires_grad;
  nd.value = Tensor::zeros(A.shape);
  k::vrelu(A.numel(), A.values.data(), nd.value.values.data());
  return push(std::move(nd), "relu");
}

// ---- row-wise normalizations ------------------------------------------------------

TensorId Tape::softmax_rows(TensorId a) {
  require_live("softmax_rows");
  check_ids({a}, "softmax_rows");
  const Tensor& A = node_at(a).value;
  Node nd;
  nd.op = OpKind::softmax_rows;
  nd.inputs = {a};
  nd.requires_grad = node_at(a).requires_grad;
  nd.value = Tensor::zeros(A.shape);
  k::softmax_rows_fwd(A.row_count(), A.last_dim(), A.values.data(), nd.value.values.data());
  return push(std::move(nd), "softmax_rows");
}

TensorId Tape::l2norm_rows(TensorId a) {
  require_live("l2norm_rows");
  check_ids({a}, "l2norm_rows");
  const Tensor& A = node_at(a).value;
  Node nd;
  nd.op = OpKind::l2norm_rows;
  nd.inputs = {a};
  nd.requires_grad = node_at(a).requires_grad;
  nd.value = Tensor::zeros(A.shape);
  nd.aux.assign(static_cast<std::size_t>(A.row_count()), 0.0);
  k::l2norm_rows_fwd(A.row_count(), A.last_dim(), A.values.data(), nd.value.values.data(),
                     nd.aux.data());
  for (const double nrm : nd.aux) {
    if (nrm == 0.0) {
      throw std::domain_error("l2norm_rows: zero-norm row");
    }
  }
  return push(std::move(nd), "l2norm_rows");
}

TensorId Tape::mean_all(TensorId a) {
  require_live("mean_all");
  check_ids({a}, "mean_all");
  const Tensor& A = node_at(a).value;
  Node nd;
  nd.op = OpKind::mean_all;
  nd.inputs = {a};
  nd.requires_grad = node_at(a).requires_grad;
  nd.value = Tensor::scalar(k::reduce_sum(A.numel(), A.values.data()) /
                            static_cast<double>(A.numel()));
  return push(std::move(nd), "mean_all");
}

TensorId Tape::gather_rows(TensorId src, const std::vector<std::int64_t>& indices,
                           std::vector<std::int64_t> index_shape) {
  require_live("gather_rows");
  check_ids({src}, "gather_rows");
  const Tensor& S = node_at(src).value;
  if (S.rank() < 2) {
    throw std::invalid_argument("gather_rows: source must have rank >= 2, got shape " +
                                shape_to_string(S.shape));
  }
  if (indices.empty()) {
    throw std::invalid_argument("gather_rows: empty index list");
  }
  const std::int64_t rows_in = S.row_count();
  for (const auto idx : indices) {
    if (idx < 0 || idx >= rows_in) {
      throw std::invalid_argument("gather_rows: index " + std::to_string(idx) +
                                  " out of range for " + std::to_string(rows_in) + " rows");
    }
  }
  if (index_shape.empty()) {
    index_shape = {static_cast<std::int64_t>(indices.size())};
  }
  std::int64_t prod = 1;
  for (const auto d : index_shape) {
    if (d < 1) {
      throw std::invalid_argument("gather_rows: index shape dimensions must be positive");
    }
    prod *= d;
  }
  if (prod != static_cast<std::int64_t>(indices.size()) || index_shape.size() > 2) {
    throw std::invalid_argument("gather_rows: index shape " + shape_to_string(index_shape) +
                                " does not describe " + std::to_string(indices.size()) +
                                " indices");
  }

  Node nd;
  nd.op = OpKind::gather_rows;
  nd.inputs = {src};
  nd.requires_grad = node_at(src).requires_grad;
  nd.indices = indices;
  std::vector<std::int64_t> out_shape = index_shape;
  out_shape.push_back(S.last_dim());
  nd.value = Tensor::zeros(std::move(out_shape));
  k::gather_rows(static_cast<std::int64_t>(indices.size()), S.last_dim(), indices.data(),
                 S.values.data(), nd.value.values.data());
  return push(std::move(nd), "gather_rows");
}

TensorId Tape::concat_rows(const std::vector<TensorId>& parts) {
  require_live("concat_rows");
  if (parts.empty()) {
    throw std::invalid_argument("concat_rows: no inputs");
  }
  check_ids(parts, "concat_rows");
  const Tensor& first = node_at(parts[0]).value;
  std::int64_t dim0 = 0;
  bool any_grad = false;
  for (const TensorId p : parts) {
    const Tensor& t = node_at(p).value;
    if (t.rank() != first.rank() ||
        !std::equal(t.shape.begin() + 1, t.shape.end(), first.shape.begin() + 1)) {
      throw std::invalid_argument("concat_rows: shape mismatch " + shape_to_string(t.shape) +
                                  " vs " + shape_to_string(first.shape));
    }
    dim0 += t.shape[0];
    any_grad = any_grad || node_at(p).requires_grad;
  }
  std::vector<std::int64_t> out_shape = first.shape;
  out_shape[0] = dim0;

  Node nd;
  nd.op = OpKind::concat_rows;
  nd.inputs = parts;
  nd.requires_grad = any_grad;
  nd.value = Tensor::zeros(std::move(out_shape));
  std::int64_t offset = 0;
  for (const TensorId p : parts) {
    const Tensor& t = node_at(p).value;
    std::memcpy(nd.value.values.data() + offset, t.values.data(),
                sizeof(double) * t.values.size());
    offset += t.numel();
  }
  return push(std::move(nd), "concat_rows");
}

TensorId Tape::layer_norm_rows(TensorId x, TensorId gain, TensorId bias) {
  require_live("layer_norm_rows");
  check_ids({x, gain, bias}, "layer_norm_rows");
  const Tensor& X = node_at(x).value;
  const Tensor& G = node_at(gain).value;
  const Tensor& Bv = node_at(bias).value;
  const std::int64_t d = X.last_dim();
  if (G.shape != std::vector<std::int64_t>{d} || Bv.shape != std::vector<std::int64_t>{d}) {
    throw std::invalid_argument("layer_norm_rows: gain/bias must have shape [" +
                                std::to_string(d) + "]");
  }
  const std::int64_t rows = X.row_count();
  Node nd;
  nd.op = OpKind::layer_norm_rows;
  nd.inputs = {x, gain, bias};
  nd.requires_grad = node_at(x).requires_grad || node_at(gain).requires_grad ||
                     node_at(bias).requires_grad;
  nd.value = Tensor::zeros(X.shape);
  nd.aux.assign(static_cast<std::size_t>(2 * rows), 0.0);  // mean ++ rstd
  k::layer_norm_rows_fwd(rows, d, X.values.data(), G.values.data(), Bv.values.data(),
                         nd.value.values.data(), nd.aux.data(), nd.aux.data() + rows);
  return push(std::move(nd), "layer_norm_rows");
}

TensorId Tape::apply_mask(TensorId x, TensorId mask) {
  require_live("apply_mask");
  check_ids({x, mask}, "apply_mask");
  const Tensor& X = node_at(x).value;
  const Tensor& M = node_at(mask).value;
  if (X.shape != M.shape) {
    throw std::invalid_argument("apply_mask: shape mismatch " + shape_to_string(X.shape) +
                                " vs " + shape_to_string(M.shape));
  }
  if (node_at(mask).requires_grad) {
    throw std::invalid_argument("apply_mask: mask must not require gradients");
  }
  for (const double v : M.values) {
    if (v != 0.0 && v != 1.0) {
      throw std::invalid_argument("apply_mask: mask entries must be 0 or 1");
    }
  }
  Node nd;
  nd.op = OpKind::apply_mask;
  nd.inputs = {x, mask};
  nd.requires_grad = node_at(x).requires_grad;
  nd.value = Tensor::zeros(X.shape);
  k::apply_mask(X.numel(), X.values.data(), M.values.data(), nd.value.values.data());
  return push(std::move(nd), "apply_mask");
}

TensorId Tape::apply(OpKind op, const std::vector<TensorId>& inputs) {
  const auto expect = [&](std::size_t n) {
    if (inputs.size() != n) {
      throw std::invalid_argument(std::string("apply: ") + op_name(op) + " expects " +
                                  std::to_string(n) + " inputs, got " +
                                  std::to_string(inputs.size()));
    }
  };
  switch (op) {
    case OpKind::matmul: expect(2); return matmul(inputs[0], inputs[1]);
    case OpKind::add: expect(2); return add(inputs[0], inputs[1]);
    case OpKind::sub: expect(2); return sub(inputs[0], inputs[1]);
    case OpKind::mul_elem: expect(2); return mul_elem(inputs[0], inputs[1]);
    case OpKind::exp: expect(1); return exp(inputs[0]);
    case OpKind::log: expect(1); return log(inputs[0]);
    case OpKind::relu: expect(1); return relu(inputs[0]);
    case OpKind::dot_rows: expect(2); return dot_rows(inputs[0], inputs[1]);
    case OpKind::softmax_rows: expect(1); return softmax_rows(inputs[0]);
    case OpKind::l2norm_rows: expect(1); return l2norm_rows(inputs[0]);
    case OpKind::mean_all: expect(1); return mean_all(inputs[0]);
    case OpKind::concat_rows: return concat_rows(inputs);
    case OpKind::layer_norm_rows:
      expect(3);
      return layer_norm_rows(inputs[0], inputs[1], inputs[2]);
    case OpKind::apply_mask: expect(2); return apply_mask(inputs[0], inputs[1]);
    case OpKind::leaf:
    case OpKind::scalar_mul:
    case OpKind::gather_rows:
      break;
  }
  throw std::invalid_argument(std::string("apply: ") + op_name(op) +
                              " requires its dedicated method");
}

// ---- backward ----------------------------------------------------------------------

GradientMap Tape::backward(TensorId loss) {
  require_live("backward");
  check_ids({loss}, "backward");
  if (node_at(loss).value.numel() != 1) {
    throw std::invalid_argument("backward: loss must hold a single element, got shape " +
                                shape_to_string(node_at(loss).value.shape));
  }
  consumed_ = true;

  std::vector<std::vector<double>> grads(nodes_.size());
  grads[static_cast<std::size_t>(loss)] = {1.0};

  // Returns the gradient accumulation buffer for `id`, allocating zeros on
  // first touch.
  const auto gbuf = [&](TensorId id) -> double* {
    auto& g = grads[static_cast<std::size_t>(id)];
    if (g.empty()) g.assign(nodes_[static_cast<std::size_t>(id)].value.values.size(), 0.0);
    return g.data();
  };
  const auto wants = [&](TensorId id) {
    return nodes_[static_cast<std::size_t>(id)].requires_grad;
  };

  for (TensorId id = loss; id >= 0; --id) {
    const Node& nd = nodes_[static_cast<std::size_t>(id)];
    if (!nd.requires_grad || nd.op == OpKind::leaf ||
        grads[static_cast<std::size_t>(id)].empty()) {
      continue;
    }
    const double* dy = grads[static_cast<std::size_t>(id)].data();
    const std::int64_t n_out = nd.value.numel();

    switch (nd.op) {
      case OpKind::matmul: {
        const Tensor& A = nodes_[nd.inputs[0]].value;
        const Tensor& B = nodes_[nd.inputs[1]].value;
        const std::int64_t m = A.shape[A.rank() - 2];
        const std::int64_t kk = A.shape[A.rank() - 1];
        const std::int64_t n = B.shape[B.rank() - 1];
        const std::int64_t batch = A.rank() == 3 ? A.shape[0] : 1;
        const std::int64_t b_stride = B.rank() == 3 ? kk * n : 0;
        for (std::int64_t s = 0; s < batch; ++s) {
          const double* dys = dy + s * m * n;
          if (wants(nd.inputs[0])) {
            k::gemm_nt(m, n, kk, dys, B.values.data() + s * b_stride,
                       gbuf(nd.inputs[0]) + s * m * kk, true);
          }
          if (wants(nd.inputs[1])) {
            k::gemm_tn(kk, m, n, A.values.data() + s * m * kk, dys,
                       gbuf(nd.inputs[1]) + s * b_stride, true);
          }
        }
        break;
      }
      case OpKind::dot_rows: {
        const Tensor& A = nodes_[nd.inputs[0]].value;
        const Tensor& B = nodes_[nd.inputs[1]].value;
        const std::int64_t d = A.shape[A.rank() - 1];
        const std::int64_t m = A.shape[A.rank() - 2];
        const std::int64_t n = B.shape[B.rank() - 2];
        const std::int64_t batch = A.rank() == 3 ? A.shape[0] : 1;
        for (std::int64_t s = 0; s < batch; ++s) {
          const double* dys = dy + s * m * n;
          if (wants(nd.inputs[0])) {
            k::gemm_nn(m, n, d, dys, B.values.data() + s * n * d,
                       gbuf(nd.inputs[0]) + s * m * d, true);
          }
          if (wants(nd.inputs[1])) {
            k::gemm_tn(n, m, d, dys, A.values.data() + s * m * d,
                       gbuf(nd.inputs[1]) + s * n * d, true);
          }
        }
        break;
      }
      case OpKind::add: {
        const Tensor& A = nodes_[nd.inputs[0]].value;
        const Tensor& B = nodes_[nd.inputs[1]].value;
        if (wants(nd.inputs[0])) k::axpy(n_out, 1.0, dy, gbuf(nd.inputs[0]));
        if (wants(nd.inputs[1])) {
          if (A.shape == B.shape) {
            k::axpy(n_out, 1.0, dy, gbuf(nd.inputs[1]));
          } else {
            // Broadcast over the trailing axis: column sums in fixed order.
            double* db = gbuf(nd.inputs[1]);
            const std::int64_t d = A.last_dim();
            const std::int64_t rows = A.row_count();
            for (std::int64_t r = 0; r < rows; ++r) {
              for (std::int64_t j = 0; j < d; ++j) db[j] += dy[r * d + j];
            }
          }
        }
        break;
      }
      case OpKind::sub: {
        if (wants(nd.inputs[0])) k::axpy(n_out, 1.0, dy, gbuf(nd.inputs[0]));
        if (wants(nd.inputs[1])) k::axpy(n_out, -1.0, dy, gbuf(nd.inputs[1]));
        break;
      }
      case OpKind::mul_elem: {
        const Tensor& A = nodes_[nd.inputs[0]].value;
        const Tensor& B = nodes_[nd.inputs[1]].value;
        if (wants(nd.inputs[0])) k::fma_acc(n_out, dy, B.values.data(), gbuf(nd.inputs[0]));
        if (wants(nd.inputs[1])) k::fma_acc(n_out, dy, A.values.data(), gbuf(nd.inputs[1]));
        break;
      }
      case OpKind::scalar_mul: {
        if (wants(nd.inputs[0])) k::axpy(n_out, nd.scalar_c, dy, gbuf(nd.inputs[0]));
        break;
      }
      case OpKind::exp: {
        if (wants(nd.inputs[0]))
          k::fma_acc(n_out, dy, nd.value.values.data(), gbuf(nd.inputs[0]));
        break;
      }
      case OpKind::log: {
        if (wants(nd.inputs[0]))
          k::div_acc(n_out, dy, nodes_[nd.inputs[0]].value.values.data(),
                     gbuf(nd.inputs[0]));
        break;
      }
      case OpKind::relu: {
        if (wants(nd.inputs[0]))
          k::relu_bwd(n_out, nodes_[nd.inputs[0]].value.values.data(), dy,
                      gbuf(nd.inputs[0]));
        break;
      }
      case OpKind::softmax_rows: {
        if (wants(nd.inputs[0]))
          k::softmax_rows_bwd(nd.value.row_count(), nd.value.last_dim(),
                              nd.value.values.data(), dy, gbuf(nd.inputs[0]));
        break;
      }
      case OpKind::l2norm_rows: {
        if (wants(nd.inputs[0]))
          k::l2norm_rows_bwd(nd.value.row_count(), nd.value.last_dim(),
                             nd.value.values.data(), nd.aux.data(), dy, gbuf(nd.inputs[0]));
        break;
      }
      case OpKind::mean_all: {
        if (wants(nd.inputs[0])) {
          const Tensor& A = nodes_[nd.inputs[0]].value;
          k::acc_const(A.numel(), dy[0] / static_cast<double>(A.numel()),
                       gbuf(nd.inputs[0]));
        }
        break;
      }
      case OpKind::gather_rows: {
        if (wants(nd.inputs[0])) {
          k::scatter_add_rows(static_cast<std::int64_t>(nd.indices.size()),
                              nd.value.last_dim(), nd.indices.data(), dy,
                              gbuf(nd.inputs[0]));
        }
        break;
      }
      case OpKind::concat_rows: {
        std::int64_t offset = 0;
        for (const TensorId p : nd.inputs) {
          const std::int64_t sz = nodes_[p].value.numel();
          if (wants(p)) k::axpy(sz, 1.0, dy + offset, gbuf(p));
          offset += sz;
        }
        break;
      }
      case OpKind::layer_norm_rows: {
        const Tensor& X = nodes_[nd.inputs[0]].value;
        const Tensor& G = nodes_[nd.inputs[1]].value;
        const std::int64_t rows = X.row_count();
        const std::int64_t d = X.last_dim();
        // The kernel fills dx, dgain and dbias together; route gradients the
        // graph does not need into scratch space.
        std::vector<double> scratch_x, scratch_g, scratch_b;
        double* dx = nullptr;
        double* dg = nullptr;
        double* db = nullptr;
        if (wants(nd.inputs[0])) {
          dx = gbuf(nd.inputs[0]);
        } else {
          scratch_x.assign(static_cast<std::size_t>(rows * d), 0.0);
          dx = scratch_x.data();
        }
        if (wants(nd.inputs[1])) {
          dg = gbuf(nd.inputs[1]);
        } else {
          scratch_g.assign(static_cast<std::size_t>(d), 0.0);
          dg = scratch_g.data();
        }
        if (wants(nd.inputs[2])) {
          db = gbuf(nd.inputs[2]);
        } else {
          scratch_b.assign(static_cast<std::size_t>(d), 0.0);
          db = scratch_b.data();
        }
        k::layer_norm_rows_bwd(rows, d, X.values.data(), G.values.data(), nd.aux.data(),
                               nd.aux.data() + rows, dy, dx, dg, db);
        break;
      }
      case OpKind::apply_mask: {
        if (wants(nd.inputs[0])) k::axpy(n_out, 1.0, dy, gbuf(nd.inputs[0]));
        break;
      }
      case OpKind::leaf:
        break;
    }
  }

  GradientMap out;
  for (std::size_t id = 0; id < nodes_.size(); ++id) {
    const Node& nd = nodes_[id];
    if (nd.op != OpKind::leaf || !nd.requires_grad) continue;
    Tensor g = Tensor::zeros(nd.value.shape);
    if (!grads[id].empty()) g.values = std::move(grads[id]);
    out.insert(static_cast<TensorId>(id), std::move(g));
  }
  return out;
}

const Tensor& Tape::value(TensorId id) const { return node_at(id).value; }

// ---- dropout -----------------------------------------------------------------------

Tensor dropout_mask(std::vector<std::int64_t> shape, double rate, std::uint64_t seed) {
  validate_new_shape(shape, "dropout_mask");
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw std::invalid_argument("dropout_mask: rate must lie in [0, 1)");
  }
  Tensor t = Tensor::zeros(std::move(shape));
  Rng rng(seed);
  const double keep_scale = 1.0 / (1.0 - rate);
  for (auto& v : t.values) {
    v = rng.next_double() < rate ? 0.0 : keep_scale;
  }
  return t;
}

// ---- finite differences --------------------------------------------------------------

FdReport finite_difference_check(const GraphFn& fn, const std::vector<Tensor>& leaves,
                                 double h, double tol) {
  if (!(h > 0.0)) {
    throw std::invalid_argument("finite_difference_check: step must be positive");
  }
  bool any_grad = false;
  for (const auto& t : leaves) any_grad = any_grad || t.requires_grad;
  if (!any_grad) {
    throw std::invalid_argument("finite_difference_check: no leaf requires gradients");
  }

  // Analytic pass.
  Tape tape;
  std::vector<TensorId> ids;
  ids.reserve(leaves.size());
  for (const auto& t : leaves) ids.push_back(tape.tensor(t));
  const TensorId loss = fn(tape, ids);
  const GradientMap grads = tape.backward(loss);

  // Forward-only evaluation at perturbed leaves.
  std::vector<Tensor> probe = leaves;
  for (auto& t : probe) t.requires_grad = false;
  const auto eval = [&]() {
    Tape tp;
    std::vector<TensorId> pids;
    pids.reserve(probe.size());
    for (const auto& t : probe) pids.push_back(tp.tensor(t));
    const TensorId l = fn(tp, pids);
    if (tp.value(l).numel() != 1) {
      throw std::invalid_argument("finite_difference_check: graph must return a scalar");
    }
    return tp.value(l).values[0];
  };

  FdReport report;
  report.tol = tol;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    if (!leaves[li].requires_grad) continue;
    const Tensor& analytic = grads.at(ids[li]);
    for (std::size_t e = 0; e < probe[li].values.size(); ++e) {
      const double orig = probe[li].values[e];
      probe[li].values[e] = orig + h;
      const double lp = eval();
      probe[li].values[e] = orig - h;
      const double lm = eval();
      probe[li].values[e] = orig;
      const double numeric = (lp - lm) / (2.0 * h);
      const double a = analytic.values[e];
      const double denom = std::max({1e-12, std::abs(a), std::abs(numeric)});
      report.max_rel_err = std::max(report.max_rel_err, std::abs(a - numeric) / denom);
      ++report.checked;
    }
  }
  report.pass = report.max_rel_err <= tol;
  return report;
}

}  // namespace dualcl
