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
#include <vector>

#include "dualcl/checkpoint.hpp"
#include "dualcl/encoder.hpp"
#include "dualcl/text.hpp"

namespace dualcl {

// Training modes. DUALCL optimizes per-example-classifier cross-entropy
// plus the weighted dual contrastive term; DUALCL_NO_DUAL keeps only the
// cross-entropy part (the dual term is still logged). The baselines run a
// global linear head over plain [CLS] features: CE alone, CE_CL adds the
// self-supervised loss over dropout-twice views, CE_SCL adds the
// supervised contrastive loss.
enum class Mode { CE, CE_CL, CE_SCL, DUALCL, DUALCL_NO_DUAL };

std::string mode_name(Mode mode);
Mode mode_from_name(const std::string& name);

struct TrainConfig {
  Mode mode = Mode::DUALCL;
  double lambda = 0.1;   // weight of the dual term in the overall objective
  double tau = 0.1;      // contrastive temperature
  int epochs = 30;
  std::int64_t batch_size = 16;
  double lr_start = 3e-4;
  double lr_end = 3e-5;
  double weight_decay = 0.01;
  std::uint64_t seed = 1;
  std::string profile = "desk";  // "desk" or "paper", informational
  // When false, only the final epoch is evaluated on the test split; earlier
  // history rows record NaN for test_acc. Training math is unaffected, so a
  // run produces bitwise-identical parameters either way. Sweeps disable this
  // because per-epoch evaluation dominates their runtime.
  bool eval_each_epoch = true;
  EncoderConfig encoder;         // carries width, depth, max_len, dropout
};

// Throws std::invalid_argument on out-of-range settings (negative lambda,
// non-positive tau, epochs < 1, lr_start < lr_end, ...).
void validate_train_config(const TrainConfig& config);

// Decoupled-weight-decay Adam state over a fixed parameter list. Moments
// are allocated on the first step and stay aligned with that list.
struct OptimizerState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t t = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
};

// One optimizer step: p <- p - lr * ( m_hat / (sqrt(v_hat) + eps) + wd * p )
// with bias-corrected moments. Throws std::invalid_argument on shape or
// count mismatches and std::runtime_error on non-finite gradients.
void adamw_step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads,
                OptimizerState& state, double lr, double weight_decay);

// Linear decay: step 0 -> lr_start, step == total_steps -> lr_end. A zero
// total (single-step schedule) pins the rate at lr_start. Throws
// std::invalid_argument when step lies outside [0, total_steps].
double lr_at(std::int64_t step, std::int64_t total_steps, double lr_start, double lr_end);

// Scales all gradients by max_norm/norm when the global L2 norm exceeds
// max_norm; returns the factor applied (1.0 when within bounds).
double clip_global_norm(std::vector<Tensor>& grads, double max_norm);

struct EpochRecord {
  int epoch = 0;  // 1-based
  double lr = 0.0;
  double ce = 0.0;
  double dual = 0.0;
  double overall = 0.0;
  double train_acc = 0.0;
  double test_acc = 0.0;
};
using TrainHistory = std::vector<EpochRecord>;

struct TrainedModel {
  TrainConfig config;
  Vocabulary vocab;
  EncoderParams encoder;
  Tensor head_w;  // [d, K] global linear head; trained by baseline modes only
  OptimizerState opt;
  TrainHistory history;
};

// Full training run: builds the vocabulary from the training split (or the
// override, when subsampled splits should share a corpus-wide one),
// initializes parameters from config.seed, and runs epochs of shuffled
// minibatches with per-example label-order shuffling in the DUALCL modes.
// Deterministic: the same inputs produce bitwise-identical models.
TrainedModel train(const TrainConfig& config, const Dataset& train_set,
                   const Dataset& test_set, const std::vector<std::string>& label_names,
                   const Vocabulary* vocab_override = nullptr);

struct EvalResult {
  double accuracy = 0.0;
  std::vector<double> per_class;  // accuracy per class id (0 when absent)
  std::vector<int> predictions;   // aligned with the dataset order
};

// Deterministic evaluation with dropout disabled and canonical label order;
// DUALCL modes predict from per-example classifiers, baselines from the
// global head.
EvalResult evaluate(const TrainedModel& model, const Dataset& ds);

// One sweep table entry: a mode variant evaluated at n examples per class.
struct SweepMode {
  Mode mode = Mode::DUALCL;
  double lambda = 0.1;
  std::string label;  // row label, e.g. "DUALCL(lambda=0.05)"
};

struct SweepRow {
  std::string mode_label;
  int n = 0;
  double mean_acc = 0.0;
  double std_acc = 0.0;  // sample standard deviation (0 for a single run)
  int runs = 0;
};

// For each mode variant, per-class count, and seed: subsample, train on the
// subset (sharing one corpus-wide vocabulary), and record the final test
// accuracy. Rows aggregate over seeds.
std::vector<SweepRow> low_resource_sweep(const TrainConfig& base,
                                         const std::vector<SweepMode>& modes,
                                         const Dataset& full_train, const Dataset& test,
                                         const std::vector<std::string>& label_names,
                                         const std::vector<int>& n_list,
                                         const std::vector<std::uint64_t>& seeds);

// CSV renderings (headers included, '\n' line endings, full precision).
std::string history_to_csv(const TrainHistory& history);
std::string sweep_to_csv(const std::vector<SweepRow>& rows);

// Checkpoint payload: encoder parameters and the head under their canonical
// names, the optimizer step counter, and first/second moments for every
// parameter the mode actually steps. unpack_model requires an exact match
// (same mode-dependent name set, same shapes).
NamedTensors pack_model(const TrainedModel& model);
void unpack_model(TrainedModel& model, const NamedTensors& tensors);

}  // namespace dualcl
