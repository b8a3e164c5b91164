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

#include <string>
#include <utility>
#include <vector>

#include "dualcl/tensor.hpp"

namespace dualcl {

// Checkpoint container: named tensors in a fixed order.
using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

// File format (version DUALCL1):
//   line 0:        "DUALCL1"
//   header lines:  "<name> <dim0> [<dim1> [<dim2>]]"
//   blank line
//   payload:       little-endian IEEE-754 doubles, concatenated in header
//                  order
// Names must be nonempty, unique, and free of whitespace.
void save_checkpoint(const std::string& path, const NamedTensors& tensors);

// Loads and validates a checkpoint; throws std::runtime_error on IO or
// format problems (bad magic, malformed header, truncated or oversized
// payload, non-finite values).
NamedTensors load_checkpoint(const std::string& path);

}  // namespace dualcl
