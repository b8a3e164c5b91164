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

#include "dualcl/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

static_assert(std::endian::native == std::endian::little,
              "checkpoint payloads are little-endian");

namespace dualcl {

namespace {
constexpr const char* kMagic = "DUALCL1";
}

void save_checkpoint(const std::string& path, const NamedTensors& tensors) {
  if (tensors.empty()) {
    throw std::invalid_argument("save_checkpoint: no tensors");
  }
  std::unordered_set<std::string> seen;
  for (const auto& [name, t] : tensors) {
    if (name.empty() || name.find_first_of(" \t\n\r") != std::string::npos) {
      throw std::invalid_argument("save_checkpoint: invalid tensor name '" + name + "'");
    }
    if (!seen.insert(name).second) {
      throw std::invalid_argument("save_checkpoint: duplicate tensor name '" + name + "'");
    }
    if (t.rank() < 1 || t.rank() > 3 ||
        static_cast<std::int64_t>(t.values.size()) != t.numel()) {
      throw std::invalid_argument("save_checkpoint: malformed tensor '" + name + "'");
    }
  }

  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("save_checkpoint: cannot open " + path);
  }
  out << kMagic << '\n';
  for (const auto& [name, t] : tensors) {
    out << name;
    for (const auto d : t.shape) out << ' ' << d;
    out << '\n';
  }
  out << '\n';
  for (const auto& [name, t] : tensors) {
    (void)name;
    out.write(reinterpret_cast<const char*>(t.values.data()),
              static_cast<std::streamsize>(t.values.size() * sizeof(double)));
  }
  if (!out) {
    throw std::runtime_error("save_checkpoint: write failed for " + path);
  }
}

NamedTensors load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("load_checkpoint: cannot open " + path);
  }
  std::string line;
  if (!std::getline(in, line) || line != kMagic) {
    throw std::runtime_error("load_checkpoint: " + path + " is not a " + kMagic +
                             " checkpoint");
  }

  NamedTensors tensors;
  std::unordered_set<std::string> seen;
  while (std::getline(in, line)) {
    if (line.empty()) break;
    std::istringstream ls(line);
    std::string name;
    ls >> name;
    std::vector<std::int64_t> shape;
    std::int64_t dim = 0;
    while (ls >> dim) shape.push_back(dim);
    if (name.empty() || !ls.eof() || shape.empty() || shape.size() > 3) {
      throw std::runtime_error("load_checkpoint: malformed header line '" + line + "'");
    }
    for (const auto d : shape) {
      if (d < 1) {
        throw std::runtime_error("load_checkpoint: non-positive dimension in '" + line + "'");
      }
    }
    if (!seen.insert(name).second) {
      throw std::runtime_error("load_checkpoint: duplicate tensor name '" + name + "'");
    }
    tensors.emplace_back(name, Tensor::zeros(shape));
  }
  if (tensors.empty()) {
    throw std::runtime_error("load_checkpoint: " + path + " lists no tensors");
  }

  for (auto& [name, t] : tensors) {
    in.read(reinterpret_cast<char*>(t.values.data()),
            static_cast<std::streamsize>(t.values.size() * sizeof(double)));
    if (in.gcount() != static_cast<std::streamsize>(t.values.size() * sizeof(double))) {
      throw std::runtime_error("load_checkpoint: truncated payload in " + path +
                               " while reading '" + name + "'");
    }
    for (const double v : t.values) {
      if (!std::isfinite(v)) {
        throw std::runtime_error("load_checkpoint: non-finite value in tensor '" + name +
                                 "'");
      }
    }
  }
  // The payload must end exactly where the header said it would.
  char extra = 0;
  in.read(&extra, 1);
  if (in.gcount() != 0) {
    throw std::runtime_error("load_checkpoint: trailing bytes after payload in " + path);
  }
  return tensors;
}

}  // namespace dualcl
