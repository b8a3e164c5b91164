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
#include <stdexcept>
#include <string>
#include <vector>

namespace dualcl {

// Dense row-major tensor of doubles, rank 1 to 3, every dimension >= 1.
// This is a plain value type; gradient bookkeeping lives on the Tape.
struct Tensor {
  std::vector<std::int64_t> shape;
  std::vector<double> values;
  bool requires_grad = false;

  std::int64_t rank() const { return static_cast<std::int64_t>(shape.size()); }

  std::int64_t numel() const {
    std::int64_t n = 1;
    for (const auto d : shape) n *= d;
    return n;
  }

  // Size of the trailing axis.
  std::int64_t last_dim() const { return shape.back(); }

  // Number of rows when the tensor is viewed as [rows, last_dim].
  std::int64_t row_count() const { return numel() / last_dim(); }

  static Tensor zeros(std::vector<std::int64_t> shape) {
    Tensor t;
    t.shape = std::move(shape);
    t.values.assign(static_cast<std::size_t>(t.numel()), 0.0);
    return t;
  }

  static Tensor full(std::vector<std::int64_t> shape, double v) {
    Tensor t = zeros(std::move(shape));
    for (auto& x : t.values) x = v;
    return t;
  }

  static Tensor scalar(double v) {
    Tensor t;
    t.shape = {1};
    t.values = {v};
    return t;
  }

  static Tensor from(std::vector<std::int64_t> shape, std::vector<double> values,
                     bool requires_grad = false) {
    Tensor t;
    t.shape = std::move(shape);
    t.values = std::move(values);
    t.requires_grad = requires_grad;
    return t;
  }
};

inline std::string shape_to_string(const std::vector<std::int64_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  s += "]";
  return s;
}

}  // namespace dualcl
