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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "dualcl/checkpoint.hpp"
#include "dualcl/encoder.hpp"
#include "dualcl/rng.hpp"
#include "dualcl/tape.hpp"
#include "dualcl/text.hpp"

using namespace dualcl;

namespace {

Vocabulary tiny_vocab() {
  Dataset ds;
  ds.num_classes = 2;
  ds.examples = {{"good fun story", 0}, {"bad dull plot", 1}, {"good plot", 0}};
  return build_vocab(ds, {"positive", "negative"});
}

EncoderConfig tiny_config(const Vocabulary& v) {
  EncoderConfig c;
  c.d_model = 8;
  c.n_layers = 1;
  c.n_heads = 2;
  c.ffn_dim = 12;
  c.max_len = 16;
  c.vocab_size = v.size();
  c.dropout_rate = 0.1;
  return c;
}

Batch tiny_batch(const Vocabulary& v, const std::vector<int>& order0,
                 const std::vector<int>& order1) {
  const std::vector<EncodedSequence> seqs{
      build_augmented_sequence(v, "good fun story", order0, 16),
      build_augmented_sequence(v, "bad dull plot", order1, 16),
  };
  return collate_batch(seqs, {0, 1});
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  REQUIRE(a.size() == b.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

}  // namespace

TEST_CASE("config validation rejects widths not divisible by heads") {
  EncoderConfig c;
  c.d_model = 7;
  c.n_heads = 2;
  c.vocab_size = 10;
  try {
    validate_config(c);
    FAIL("expected exception");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("heads must divide width") != std::string::npos);
  }
  c.d_model = 8;
  CHECK_NOTHROW(validate_config(c));
  c.dropout_rate = 1.0;
  CHECK_THROWS_AS(validate_config(c), std::invalid_argument);
}

TEST_CASE("parameter initialization is seeded and structured") {
  const Vocabulary v = tiny_vocab();
  const EncoderConfig c = tiny_config(v);
  const EncoderParams a = init_params(c, 11);
  const EncoderParams b = init_params(c, 11);
  const EncoderParams other = init_params(c, 12);

  CHECK(a.tok_emb.values == b.tok_emb.values);
  CHECK(a.layers[0].w1.values == b.layers[0].w1.values);
  CHECK(a.tok_emb.values != other.tok_emb.values);

  for (const double g : a.layers[0].ln1_gain.values) CHECK(g == 1.0);
  for (const double x : a.layers[0].bo.values) CHECK(x == 0.0);
  CHECK(a.layers[0].wq[0].shape == std::vector<std::int64_t>{8, 4});
  CHECK(a.layers[0].wo[1].shape == std::vector<std::int64_t>{4, 8});

  // Canonical traversal: stable names, one visit per parameter.
  std::vector<std::string> names;
  for_each_param(a, [&](const std::string& n, const Tensor& t) {
    names.push_back(n);
    CHECK(t.requires_grad);
  });
  REQUIRE(names.size() == 2 + 7 * 2 + 9);
  CHECK(names[0] == "tok_emb");
  CHECK(names[1] == "pos_emb");
  CHECK(names[2] == "layer0.wq0");
  CHECK(names.back() == "layer0.ln2_bias");
}

TEST_CASE("encoding produces hidden states and validates inputs") {
  const Vocabulary v = tiny_vocab();
  const EncoderConfig c = tiny_config(v);
  const EncoderParams params = init_params(c, 3);
  const Batch batch = tiny_batch(v, {0, 1}, {0, 1});

  Tape tape;
  const EncoderHandles h = register_params(tape, params);
  const TensorId hidden = encode_tokens(tape, h, c, batch, false, 0);
  CHECK(tape.value(hidden).shape ==
        std::vector<std::int64_t>{batch.batch_size, batch.seq_len, c.d_model});

  // Sequences longer than max_len are rejected.
  EncoderConfig small = c;
  small.max_len = 4;
  Tape t2;
  const EncoderHandles h2 = register_params(t2, params);
  CHECK_THROWS_AS((void)encode_tokens(t2, h2, small, batch, false, 0),
                  std::invalid_argument);

  // Token ids beyond the embedding table are rejected.
  Batch bad = batch;
  bad.token_ids[0] = c.vocab_size + 5;
  Tape t3;
  const EncoderHandles h3 = register_params(t3, params);
  CHECK_THROWS_AS((void)encode_tokens(t3, h3, c, bad, false, 0), std::invalid_argument);
}

TEST_CASE("z rows and classifier columns are unit norm") {
  const Vocabulary v = tiny_vocab();
  const EncoderConfig c = tiny_config(v);
  const EncoderParams params = init_params(c, 5);
  const Batch batch = tiny_batch(v, {0, 1}, {1, 0});

  Tape tape;
  const EncoderHandles h = register_params(tape, params);
  const TensorId hidden = encode_tokens(tape, h, c, batch, false, 0);
  const Representations rep = extract_representations(tape, hidden, batch);

  const Tensor& z = tape.value(rep.z);
  REQUIRE(z.shape == std::vector<std::int64_t>{2, 8});
  for (std::int64_t r = 0; r < 2; ++r) {
    double nrm = 0.0;
    for (std::int64_t j = 0; j < 8; ++j) nrm += z.values[r * 8 + j] * z.values[r * 8 + j];
    CHECK(std::abs(std::sqrt(nrm) - 1.0) < 1e-9);
  }
  const Tensor& theta = tape.value(rep.theta);
  REQUIRE(theta.shape == std::vector<std::int64_t>{4, 8});
  for (std::int64_t r = 0; r < 4; ++r) {
    double nrm = 0.0;
    for (std::int64_t j = 0; j < 8; ++j)
      nrm += theta.values[r * 8 + j] * theta.values[r * 8 + j];
    CHECK(std::abs(std::sqrt(nrm) - 1.0) < 1e-9);
  }

  // theta_star picks the true-label column; theta_b3 is a rank-3 view.
  const Tensor& star = tape.value(rep.theta_star);
  const Tensor& b3 = tape.value(rep.theta_b3);
  CHECK(b3.shape == std::vector<std::int64_t>{2, 2, 8});
  for (std::int64_t j = 0; j < 8; ++j) {
    CHECK(star.values[j] == theta.values[0 * 8 + j]);        // example 0, label 0
    CHECK(star.values[8 + j] == theta.values[3 * 8 + j]);    // example 1, label 1
    CHECK(b3.values[j] == theta.values[j]);
  }

  // Plain batches cannot provide classifier columns.
  const std::vector<EncodedSequence> plain{build_plain_sequence(v, "good fun", 16),
                                           build_plain_sequence(v, "bad", 16)};
  const Batch pb = collate_batch(plain, {0, 1});
  Tape t2;
  const EncoderHandles h2 = register_params(t2, params);
  const TensorId hid2 = encode_tokens(t2, h2, c, pb, false, 0);
  CHECK_THROWS_AS((void)extract_representations(t2, hid2, pb), std::invalid_argument);
  CHECK_NOTHROW((void)extract_cls_features(t2, hid2, pb));
}

TEST_CASE("label order does not change representations when positions are neutral") {
  const Vocabulary v = tiny_vocab();
  const EncoderConfig c = tiny_config(v);
  EncoderParams params = init_params(c, 7);
  // The invariance is exact only without positional information.
  for (auto& x : params.pos_emb.values) x = 0.0;

  const auto run = [&](const std::vector<int>& order0, const std::vector<int>& order1) {
    const Batch batch = tiny_batch(v, order0, order1);
    Tape tape;
    const EncoderHandles h = register_params(tape, params);
    const TensorId hidden = encode_tokens(tape, h, c, batch, false, 0);
    const Representations rep = extract_representations(tape, hidden, batch);
    return std::make_pair(tape.value(rep.z).values, tape.value(rep.theta).values);
  };

  const auto [z_canonical, theta_canonical] = run({0, 1}, {0, 1});
  const auto [z_shuffled, theta_shuffled] = run({1, 0}, {0, 1});
  CHECK(max_abs_diff(z_canonical, z_shuffled) < 1e-12);
  CHECK(max_abs_diff(theta_canonical, theta_shuffled) < 1e-12);
}

TEST_CASE("padding extension leaves real rows untouched") {
  const Vocabulary v = tiny_vocab();
  const EncoderConfig c = tiny_config(v);
  const EncoderParams params = init_params(c, 9);

  const EncodedSequence short_seq = build_augmented_sequence(v, "good fun", {0, 1}, 16);
  const EncodedSequence long_seq =
      build_augmented_sequence(v, "bad dull plot good fun story", {0, 1}, 16);

  const auto encode_first_z = [&](const std::vector<EncodedSequence>& seqs,
                                  const std::vector<int>& labels) {
    const Batch batch = collate_batch(seqs, labels);
    Tape tape;
    const EncoderHandles h = register_params(tape, params);
    const TensorId hidden = encode_tokens(tape, h, c, batch, false, 0);
    const Representations rep = extract_representations(tape, hidden, batch);
    const Tensor& z = tape.value(rep.z);
    std::vector<double> first(z.values.begin(), z.values.begin() + c.d_model);
    std::vector<double> theta_first(tape.value(rep.theta).values.begin(),
                                    tape.value(rep.theta).values.begin() + 2 * c.d_model);
    first.insert(first.end(), theta_first.begin(), theta_first.end());
    return first;
  };

  // Alone (no padding) vs padded next to a longer neighbour.
  const auto alone = encode_first_z({short_seq}, {0});
  const auto padded = encode_first_z({short_seq, long_seq}, {0, 1});
  CHECK(max_abs_diff(alone, padded) < 1e-9);
}

TEST_CASE("dropout is seeded per site and disabled at eval") {
  const Vocabulary v = tiny_vocab();
  const EncoderConfig c = tiny_config(v);
  const EncoderParams params = init_params(c, 13);
  const Batch batch = tiny_batch(v, {0, 1}, {0, 1});

  const auto run = [&](bool train, std::uint64_t seed) {
    Tape tape;
    const EncoderHandles h = register_params(tape, params);
    return tape.value(encode_tokens(tape, h, c, batch, train, seed)).values;
  };

  CHECK(run(true, 1) == run(true, 1));
  CHECK(run(true, 1) != run(true, 2));
  CHECK(run(false, 1) == run(false, 2));  // eval ignores the dropout seed
  CHECK(run(false, 1) != run(true, 1));
}

TEST_CASE("encoder and representation gradients match finite differences") {
  const Vocabulary v = tiny_vocab();
  EncoderConfig c = tiny_config(v);
  c.d_model = 4;
  c.n_heads = 2;
  c.ffn_dim = 6;
  EncoderParams params = init_params(c, 21);
  // The default init keeps attention logits so small that query/key
  // gradients drown in finite-difference noise; rescale every parameter to
  // a healthy working point before differencing.
  Rng rng(97);
  for_each_param(params, [&](const std::string&, Tensor& t) {
    for (double& x : t.values) x = 0.3 * rng.next_normal();
  });

  const std::vector<EncodedSequence> seqs{
      build_augmented_sequence(v, "good fun", {0, 1}, 16),
      build_augmented_sequence(v, "bad dull plot", {1, 0}, 16),
  };
  const Batch batch = collate_batch(seqs, {0, 1});

  std::vector<Tensor> leaves;
  for_each_param(params, [&](const std::string&, const Tensor& t) { leaves.push_back(t); });

  // Project every output onto fixed random directions so each parameter
  // receives a well-scaled gradient (unit-norm rows make symmetric probes
  // like mean(z*z) constant by construction).
  Rng probe_rng(131);
  const auto random_probe = [&](const std::vector<std::int64_t>& shape) {
    Tensor t = Tensor::zeros(shape);
    for (double& x : t.values) x = probe_rng.next_normal();
    return t;
  };
  const Tensor probe_z = random_probe({2, c.d_model});
  const Tensor probe_theta = random_probe({4, c.d_model});
  const Tensor probe_star = random_probe({2, c.d_model});

  const auto graph = [&](Tape& tape, const std::vector<TensorId>& ids) {
    const EncoderHandles h = handles_from_flat(c, ids);
    const TensorId hidden = encode_tokens(tape, h, c, batch, false, 0);
    const Representations rep = extract_representations(tape, hidden, batch);
    const TensorId s1 = tape.mean_all(tape.mul_elem(rep.z, tape.tensor(probe_z)));
    const TensorId s2 = tape.mean_all(tape.mul_elem(rep.theta, tape.tensor(probe_theta)));
    const TensorId s3 =
        tape.mean_all(tape.mul_elem(rep.theta_star, tape.tensor(probe_star)));
    return tape.add(tape.add(s1, s2), s3);
  };

  // Per-op gradients are checked at 1e-6 elsewhere; the composite graph
  // tolerates slightly more finite-difference noise on its smallest entries.
  const auto report = finite_difference_check(graph, leaves, 1e-5, 1e-5);
  INFO("checked ", report.checked, " max_rel_err ", report.max_rel_err);
  CHECK(report.pass);
}

TEST_CASE("checkpoints round-trip bitwise and reject corruption") {
  const auto dir = std::filesystem::temp_directory_path();
  const auto path = (dir / "dualcl_ckpt_test.dualcl").string();

  const Vocabulary v = tiny_vocab();
  EncoderConfig c = tiny_config(v);
  c.n_layers = 1;
  const EncoderParams params = init_params(c, 33);
  NamedTensors tensors;
  for_each_param(params, [&](const std::string& n, const Tensor& t) {
    tensors.emplace_back(n, t);
  });
  save_checkpoint(path, tensors);
  const NamedTensors loaded = load_checkpoint(path);
  REQUIRE(loaded.size() == tensors.size());
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    CHECK(loaded[i].first == tensors[i].first);
    CHECK(loaded[i].second.shape == tensors[i].second.shape);
    CHECK(loaded[i].second.values == tensors[i].second.values);  // bitwise
  }

  // Corrupt magic.
  {
    std::ofstream out(path, std::ios::binary);
    out << "NOTDUALCL\nx 1\n\n";
  }
  CHECK_THROWS_AS((void)load_checkpoint(path), std::runtime_error);

  // Truncated payload.
  save_checkpoint(path, tensors);
  {
    std::error_code ec;
    const auto size = std::filesystem::file_size(path, ec);
    std::filesystem::resize_file(path, size - 8, ec);
  }
  CHECK_THROWS_AS((void)load_checkpoint(path), std::runtime_error);

  CHECK_THROWS_AS((void)load_checkpoint((dir / "missing_ckpt.dualcl").string()),
                  std::runtime_error);
  CHECK_THROWS_AS(save_checkpoint(path, {{"bad name", Tensor::scalar(1.0)}}),
                  std::invalid_argument);
  CHECK_THROWS_AS(save_checkpoint(path, {{"a", Tensor::scalar(1.0)},
                                          {"a", Tensor::scalar(2.0)}}),
                  std::invalid_argument);
}
