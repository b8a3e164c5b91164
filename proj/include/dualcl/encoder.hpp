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
#include <string>
#include <vector>

#include "dualcl/tape.hpp"
#include "dualcl/tensor.hpp"
#include "dualcl/text.hpp"

namespace dualcl {

// Small post-norm transformer encoder over learned token and position
// embeddings. Attention runs with one projection triple per head
// ([d, d/h] matrices) and per-head output projections summed into the
// residual stream, which keeps every tensor within rank 3.

struct EncoderConfig {
  std::int64_t d_model = 64;
  std::int64_t n_layers = 2;
  std::int64_t n_heads = 4;
  std::int64_t ffn_dim = 128;
  std::int64_t max_len = 64;
  std::int64_t vocab_size = 0;
  double dropout_rate = 0.1;

  std::int64_t head_dim() const { return d_model / n_heads; }
};

// Throws std::invalid_argument on inconsistent settings (in particular:
// heads must divide width).
void validate_config(const EncoderConfig& config);

struct LayerParams {
  std::vector<Tensor> wq, wk, wv;  // per head: [d, d/h]
  std::vector<Tensor> bq, bk, bv;  // per head: [d/h]
  std::vector<Tensor> wo;          // per head: [d/h, d]
  Tensor bo;                       // [d]
  Tensor ln1_gain, ln1_bias;       // [d]
  Tensor w1, b1;                   // [d, ffn], [ffn]
  Tensor w2, b2;                   // [ffn, d], [d]
  Tensor ln2_gain, ln2_bias;       // [d]
};

struct EncoderParams {
  EncoderConfig config;
  Tensor tok_emb;  // [vocab, d]
  Tensor pos_emb;  // [max_len, d]
  std::vector<LayerParams> layers;
};

// Weights and embeddings drawn from N(0, 0.02^2); layer-norm gains 1,
// all biases 0. Every parameter is created with requires_grad=true.
EncoderParams init_params(const EncoderConfig& config, std::uint64_t seed);

// Visits every parameter exactly once in the canonical order used by the
// optimizer state and the checkpoint format. Names are stable identifiers
// like "tok_emb" or "layer1.wq0".
void for_each_param(EncoderParams& params,
                    const std::function<void(const std::string&, Tensor&)>& fn);
void for_each_param(const EncoderParams& params,
                    const std::function<void(const std::string&, const Tensor&)>& fn);

// Tape ids of the registered parameters, mirroring EncoderParams.
struct LayerHandles {
  std::vector<TensorId> wq, wk, wv, bq, bk, bv, wo;
  TensorId bo{}, ln1_gain{}, ln1_bias{}, w1{}, b1{}, w2{}, b2{}, ln2_gain{}, ln2_bias{};
};

struct EncoderHandles {
  TensorId tok_emb{}, pos_emb{};
  std::vector<LayerHandles> layers;
};

// Registers every parameter as a tape leaf (canonical order) and returns
// the handle structure.
EncoderHandles register_params(Tape& tape, const EncoderParams& params);

// Rebuilds the handle structure from leaf ids laid out in canonical order
// (as produced by registering each for_each_param tensor in sequence).
// Useful for gradient checking whole-encoder graphs.
EncoderHandles handles_from_flat(const EncoderConfig& config,
                                 const std::vector<TensorId>& flat);

// Runs the encoder over a collated batch and returns the hidden states
// [batch, seq_len, d]. Padding positions are excluded from attention via an
// additive -1e9 mask. In train mode, dropout masks are derived from
// dropout_seed (embeddings, attention output and FFN output per layer);
// eval mode applies no dropout.
TensorId encode_tokens(Tape& tape, const EncoderHandles& handles,
                       const EncoderConfig& config, const Batch& batch, bool train_mode,
                       std::uint64_t dropout_seed);

// Dual representations taken from the hidden states of a label-augmented
// batch: z_i is the unit-normalized [CLS] feature of example i, and the
// per-example classifier stacks one unit-normalized column per class,
// mean-pooled over that class's label-token positions.
struct Representations {
  TensorId z{};           // [B, d], unit rows
  TensorId theta{};       // [B*K, d], row b*K + k = classifier column k of example b
  TensorId theta_b3{};    // [B, K, d], same values
  TensorId theta_star{};  // [B, d], row i = theta_i^{y_i}
  std::int64_t batch_size = 0;
  int num_classes = 0;
};

Representations extract_representations(Tape& tape, TensorId hidden, const Batch& batch);

// Unit-normalized [CLS] features only; works for plain batches (baseline
// modes).
TensorId extract_cls_features(Tape& tape, TensorId hidden, const Batch& batch);

}  // namespace dualcl
