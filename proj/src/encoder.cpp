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

#include "dualcl/encoder.hpp"

#include <cmath>
#include <stdexcept>

#include "dualcl/rng.hpp"

namespace dualcl {

void validate_config(const EncoderConfig& c) {
  if (c.d_model < 1 || c.n_layers < 1 || c.n_heads < 1 || c.ffn_dim < 1 ||
      c.max_len < 3 || c.vocab_size < 4) {
    throw std::invalid_argument(
        "encoder: config must satisfy d_model/n_layers/n_heads/ffn_dim >= 1, "
        "max_len >= 3, vocab_size >= 4");
  }
  if (c.d_model % c.n_heads != 0) {
    throw std::invalid_argument("encoder: heads must divide width (d_model " +
                                std::to_string(c.d_model) + " % n_heads " +
                                std::to_string(c.n_heads) + " != 0)");
  }
  if (!(c.dropout_rate >= 0.0 && c.dropout_rate < 1.0)) {
    throw std::invalid_argument("encoder: dropout_rate must lie in [0, 1)");
  }
}

EncoderParams init_params(const EncoderConfig& config, std::uint64_t seed) {
  validate_config(config);
  EncoderParams p;
  p.config = config;
  const std::int64_t d = config.d_model;
  const std::int64_t dh = config.head_dim();

  Rng rng(seed);
  const auto weight = [&](std::vector<std::int64_t> shape) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (auto& v : t.values) v = 0.02 * rng.next_normal();
    t.requires_grad = true;
    return t;
  };
  const auto zeros = [&](std::vector<std::int64_t> shape) {
    Tensor t = Tensor::zeros(std::move(shape));
    t.requires_grad = true;
    return t;
  };
  const auto ones = [&](std::vector<std::int64_t> shape) {
    Tensor t = Tensor::full(std::move(shape), 1.0);
    t.requires_grad = true;
    return t;
  };

  p.tok_emb = weight({config.vocab_size, d});
  p.pos_emb = weight({config.max_len, d});
  for (std::int64_t l = 0; l < config.n_layers; ++l) {
    LayerParams lp;
    for (std::int64_t h = 0; h < config.n_heads; ++h) {
      lp.wq.push_back(weight({d, dh}));
      lp.wk.push_back(weight({d, dh}));
      lp.wv.push_back(weight({d, dh}));
      lp.bq.push_back(zeros({dh}));
      lp.bk.push_back(zeros({dh}));
      lp.bv.push_back(zeros({dh}));
      lp.wo.push_back(weight({dh, d}));
    }
    lp.bo = zeros({d});
    lp.ln1_gain = ones({d});
    lp.ln1_bias = zeros({d});
    lp.w1 = weight({d, config.ffn_dim});
    lp.b1 = zeros({config.ffn_dim});
    lp.w2 = weight({config.ffn_dim, d});
    lp.b2 = zeros({d});
    lp.ln2_gain = ones({d});
    lp.ln2_bias = zeros({d});
    p.layers.push_back(std::move(lp));
  }
  return p;
}

namespace {

// Single traversal used by both const and mutable variants.
template <typename Params, typename Fn>
void visit_params(Params& p, const Fn& fn) {
  fn("tok_emb", p.tok_emb);
  fn("pos_emb", p.pos_emb);
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    auto& lp = p.layers[l];
    const std::string prefix = "layer" + std::to_string(l) + ".";
    for (std::size_t h = 0; h < lp.wq.size(); ++h) {
      const std::string hs = std::to_string(h);
      fn(prefix + "wq" + hs, lp.wq[h]);
      fn(prefix + "wk" + hs, lp.wk[h]);
      fn(prefix + "wv" + hs, lp.wv[h]);
      fn(prefix + "bq" + hs, lp.bq[h]);
      fn(prefix + "bk" + hs, lp.bk[h]);
      fn(prefix + "bv" + hs, lp.bv[h]);
      fn(prefix + "wo" + hs, lp.wo[h]);
    }
    fn(prefix + "bo", lp.bo);
    fn(prefix + "ln1_gain", lp.ln1_gain);
    fn(prefix + "ln1_bias", lp.ln1_bias);
    fn(prefix + "w1", lp.w1);
    fn(prefix + "b1", lp.b1);
    fn(prefix + "w2", lp.w2);
    fn(prefix + "b2", lp.b2);
    fn(prefix + "ln2_gain", lp.ln2_gain);
    fn(prefix + "ln2_bias", lp.ln2_bias);
  }
}

}  // namespace

void for_each_param(EncoderParams& params,
                    const std::function<void(const std::string&, Tensor&)>& fn) {
  visit_params(params, fn);
}

void for_each_param(const EncoderParams& params,
                    const std::function<void(const std::string&, const Tensor&)>& fn) {
  visit_params(params, fn);
}

EncoderHandles register_params(Tape& tape, const EncoderParams& params) {
  std::vector<TensorId> flat;
  for_each_param(params, [&](const std::string&, const Tensor& t) {
    flat.push_back(tape.tensor(t));
  });
  return handles_from_flat(params.config, flat);
}

EncoderHandles handles_from_flat(const EncoderConfig& config,
                                 const std::vector<TensorId>& flat) {
  const std::size_t per_layer = 7 * static_cast<std::size_t>(config.n_heads) + 9;
  const std::size_t expected = 2 + static_cast<std::size_t>(config.n_layers) * per_layer;
  if (flat.size() != expected) {
    throw std::invalid_argument("encoder: expected " + std::to_string(expected) +
                                " parameter ids, got " + std::to_string(flat.size()));
  }
  EncoderHandles h;
  std::size_t i = 0;
  h.tok_emb = flat[i++];
  h.pos_emb = flat[i++];
  for (std::int64_t l = 0; l < config.n_layers; ++l) {
    LayerHandles lh;
    for (std::int64_t head = 0; head < config.n_heads; ++head) {
      lh.wq.push_back(flat[i++]);
      lh.wk.push_back(flat[i++]);
      lh.wv.push_back(flat[i++]);
      lh.bq.push_back(flat[i++]);
      lh.bk.push_back(flat[i++]);
      lh.bv.push_back(flat[i++]);
      lh.wo.push_back(flat[i++]);
    }
    lh.bo = flat[i++];
    lh.ln1_gain = flat[i++];
    lh.ln1_bias = flat[i++];
    lh.w1 = flat[i++];
    lh.b1 = flat[i++];
    lh.w2 = flat[i++];
    lh.b2 = flat[i++];
    lh.ln2_gain = flat[i++];
    lh.ln2_bias = flat[i++];
    h.layers.push_back(std::move(lh));
  }
  return h;
}

TensorId encode_tokens(Tape& tape, const EncoderHandles& handles,
                       const EncoderConfig& config, const Batch& batch, bool train_mode,
                       std::uint64_t dropout_seed) {
  validate_config(config);
  const std::int64_t b = batch.batch_size;
  const std::int64_t t = batch.seq_len;
  if (t > config.max_len) {
    throw std::invalid_argument("encode_tokens: sequence length " + std::to_string(t) +
                                " exceeds max_len " + std::to_string(config.max_len));
  }
  for (const std::int64_t id : batch.token_ids) {
    if (id < 0 || id >= config.vocab_size) {
      throw std::invalid_argument("encode_tokens: token id " + std::to_string(id) +
                                  " out of range for vocabulary of " +
                                  std::to_string(config.vocab_size));
    }
  }

  const bool dropping = train_mode && config.dropout_rate > 0.0;
  const auto dropout = [&](TensorId x, std::uint64_t site_seed) {
    if (!dropping) return x;
    const Tensor mask =
        dropout_mask(tape.value(x).shape, config.dropout_rate, site_seed);
    return tape.mul_elem(x, tape.tensor(mask));
  };

  // Embeddings: token lookup plus position lookup, both as row gathers.
  std::vector<std::int64_t> pos_idx(static_cast<std::size_t>(b * t));
  for (std::int64_t i = 0; i < b; ++i) {
    for (std::int64_t j = 0; j < t; ++j) pos_idx[static_cast<std::size_t>(i * t + j)] = j;
  }
  TensorId x = tape.add(tape.gather_rows(handles.tok_emb, batch.token_ids, {b, t}),
                        tape.gather_rows(handles.pos_emb, pos_idx, {b, t}));
  x = dropout(x, derive_seed(dropout_seed, "emb"));

  // Keys at padding positions are masked out of every attention row.
  Tensor attn_mask = Tensor::zeros({b, t, t});
  for (std::int64_t i = 0; i < b; ++i) {
    for (std::int64_t q = 0; q < t; ++q) {
      for (std::int64_t kk = 0; kk < t; ++kk) {
        attn_mask.values[static_cast<std::size_t>((i * t + q) * t + kk)] =
            batch.pad_mask[static_cast<std::size_t>(i * t + kk)];
      }
    }
  }
  const TensorId mask_id = tape.tensor(attn_mask);
  const double scale = 1.0 / std::sqrt(static_cast<double>(config.head_dim()));

  for (std::int64_t l = 0; l < config.n_layers; ++l) {
    const LayerHandles& lh = handles.layers[static_cast<std::size_t>(l)];
    const auto lu = static_cast<std::uint64_t>(l);

    // Multi-head self-attention; per-head outputs are projected back to
    // width d and summed.
    TensorId attn{};
    for (std::int64_t head = 0; head < config.n_heads; ++head) {
      const auto hu = static_cast<std::size_t>(head);
      const TensorId q = tape.add(tape.matmul(x, lh.wq[hu]), lh.bq[hu]);
      const TensorId k = tape.add(tape.matmul(x, lh.wk[hu]), lh.bk[hu]);
      const TensorId v = tape.add(tape.matmul(x, lh.wv[hu]), lh.bv[hu]);
      const TensorId scores = tape.scalar_mul(tape.dot_rows(q, k), scale);
      const TensorId probs = tape.softmax_rows(tape.apply_mask(scores, mask_id));
      const TensorId out = tape.matmul(tape.matmul(probs, v), lh.wo[hu]);
      attn = head == 0 ? out : tape.add(attn, out);
    }
    attn = tape.add(attn, lh.bo);
    attn = dropout(attn, derive_seed(dropout_seed, "attn", lu));
    x = tape.layer_norm_rows(tape.add(x, attn), lh.ln1_gain, lh.ln1_bias);

    TensorId ffn = tape.relu(tape.add(tape.matmul(x, lh.w1), lh.b1));
    ffn = tape.add(tape.matmul(ffn, lh.w2), lh.b2);
    ffn = dropout(ffn, derive_seed(dropout_seed, "ffn", lu));
    x = tape.layer_norm_rows(tape.add(x, ffn), lh.ln2_gain, lh.ln2_bias);
  }
  return x;
}

TensorId extract_cls_features(Tape& tape, TensorId hidden, const Batch& batch) {
  const Tensor& h = tape.value(hidden);
  if (h.rank() != 3 || h.shape[0] != batch.batch_size || h.shape[1] != batch.seq_len) {
    throw std::invalid_argument("extract_cls_features: hidden states do not match batch");
  }
  std::vector<std::int64_t> cls_idx(static_cast<std::size_t>(batch.batch_size));
  for (std::int64_t i = 0; i < batch.batch_size; ++i) cls_idx[static_cast<std::size_t>(i)] = i * batch.seq_len;
  return tape.l2norm_rows(
      tape.gather_rows(hidden, cls_idx, {batch.batch_size}));
}

Representations extract_representations(Tape& tape, TensorId hidden, const Batch& batch) {
  if (!batch.augmented) {
    throw std::invalid_argument(
        "extract_representations: batch is not label-augmented");
  }
  const Tensor& h = tape.value(hidden);
  if (h.rank() != 3 || h.shape[0] != batch.batch_size || h.shape[1] != batch.seq_len) {
    throw std::invalid_argument("extract_representations: hidden states do not match batch");
  }
  const std::int64_t b = batch.batch_size;
  const std::int64_t t = batch.seq_len;
  const std::int64_t k = batch.num_classes;

  Representations rep;
  rep.batch_size = b;
  rep.num_classes = static_cast<int>(k);
  rep.z = extract_cls_features(tape, hidden, batch);

  // Mean-pool each class's label-token rows with one constant matrix:
  // theta_flat[bk, :] = mean over positions p of hidden[b, p, :].
  Tensor pool = Tensor::zeros({b * k, b * t});
  for (std::int64_t i = 0; i < b; ++i) {
    for (std::int64_t c = 0; c < k; ++c) {
      const auto& positions =
          batch.label_positions[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)];
      if (positions.empty()) {
        throw std::invalid_argument(
            "extract_representations: class " + std::to_string(c) +
            " has no label-token positions in example " + std::to_string(i));
      }
      const double w = 1.0 / static_cast<double>(positions.size());
      for (const std::int64_t p : positions) {
        if (p < 0 || p >= t) {
          throw std::invalid_argument("extract_representations: label position out of range");
        }
        pool.values[static_cast<std::size_t>((i * k + c) * (b * t) + i * t + p)] = w;
      }
    }
  }
  std::vector<std::int64_t> flat_idx(static_cast<std::size_t>(b * t));
  for (std::int64_t i = 0; i < b * t; ++i) flat_idx[static_cast<std::size_t>(i)] = i;
  const TensorId flat_h = tape.gather_rows(hidden, flat_idx, {b * t});
  rep.theta = tape.l2norm_rows(tape.matmul(tape.tensor(pool), flat_h));

  std::vector<std::int64_t> all_rows(static_cast<std::size_t>(b * k));
  for (std::int64_t i = 0; i < b * k; ++i) all_rows[static_cast<std::size_t>(i)] = i;
  rep.theta_b3 = tape.gather_rows(rep.theta, all_rows, {b, k});

  std::vector<std::int64_t> star_idx(static_cast<std::size_t>(b));
  for (std::int64_t i = 0; i < b; ++i) {
    const int y = batch.labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= k) {
      throw std::invalid_argument("extract_representations: label " + std::to_string(y) +
                                  " out of range");
    }
    star_idx[static_cast<std::size_t>(i)] = i * k + y;
  }
  rep.theta_star = tape.gather_rows(rep.theta, star_idx, {b});
  return rep;
}

}  // namespace dualcl
