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

#include "dualcl/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "dualcl/objectives.hpp"
#include "dualcl/rng.hpp"
#include "dualcl/tape.hpp"

namespace dualcl {

namespace {

bool is_baseline(Mode mode) {
  return mode == Mode::CE || mode == Mode::CE_CL || mode == Mode::CE_SCL;
}

std::string fmt_full(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Names of the tensors the optimizer steps for a given mode, in canonical
// order: every encoder parameter, plus the global head for baselines.
std::vector<std::string> stepped_names(const EncoderParams& params, Mode mode) {
  std::vector<std::string> names;
  for_each_param(params, [&](const std::string& n, const Tensor&) { names.push_back(n); });
  if (is_baseline(mode)) names.push_back("head.w");
  return names;
}

std::vector<Tensor*> stepped_tensors(TrainedModel& model) {
  std::vector<Tensor*> ptrs;
  for_each_param(model.encoder, [&](const std::string&, Tensor& t) { ptrs.push_back(&t); });
  if (is_baseline(model.config.mode)) ptrs.push_back(&model.head_w);
  return ptrs;
}

// Registers the encoder (and, for baselines, the head) as tape leaves and
// returns the ids in the same canonical order as stepped_tensors.
std::vector<TensorId> register_stepped(Tape& tape, const TrainedModel& model) {
  std::vector<TensorId> ids;
  for_each_param(model.encoder,
                 [&](const std::string&, const Tensor& t) { ids.push_back(tape.tensor(t)); });
  if (is_baseline(model.config.mode)) ids.push_back(tape.tensor(model.head_w));
  return ids;
}

EncoderHandles encoder_handles(const EncoderConfig& config,
                               const std::vector<TensorId>& ids, Mode mode) {
  std::vector<TensorId> encoder_ids = ids;
  if (is_baseline(mode)) encoder_ids.pop_back();
  return handles_from_flat(config, encoder_ids);
}

// Standard softmax cross-entropy over given logits; same probability-mask
// construction as the per-example variant in objectives.
LossValue softmax_ce(Tape& tape, TensorId logits, const std::vector<int>& labels) {
  const Tensor& lt = tape.value(logits);
  const std::int64_t b = lt.shape[0];
  const std::int64_t k = lt.shape[1];
  if (static_cast<std::int64_t>(labels.size()) != b) {
    throw std::invalid_argument("softmax_ce: got " + std::to_string(labels.size()) +
                                " labels for batch " + std::to_string(b));
  }
  std::vector<double> pos(static_cast<std::size_t>(b * k), 0.0);
  std::vector<double> fill(static_cast<std::size_t>(b * k), 1.0);
  for (std::int64_t i = 0; i < b; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= k) {
      throw std::invalid_argument("softmax_ce: label " + std::to_string(y) +
                                  " out of range for " + std::to_string(k) + " classes");
    }
    pos[static_cast<std::size_t>(i * k + y)] = 1.0;
    fill[static_cast<std::size_t>(i * k + y)] = 0.0;
  }
  const TensorId probs = tape.softmax_rows(logits);
  const TensorId padj =
      tape.add(tape.mul_elem(probs, tape.tensor({b, k}, pos, false)),
               tape.tensor({b, k}, fill, false));
  const TensorId picked = tape.mul_elem(tape.log(padj), tape.tensor({b, k}, pos, false));
  const TensorId handle = tape.scalar_mul(tape.mean_all(picked), -static_cast<double>(k));

  LossValue out;
  out.handle = handle;
  out.total = tape.value(handle).values[0];
  out.per_anchor.assign(static_cast<std::size_t>(b), 0.0);
  const std::vector<double>& pv = tape.value(probs).values;
  for (std::int64_t i = 0; i < b; ++i) {
    out.per_anchor[static_cast<std::size_t>(i)] = -std::log(
        pv[static_cast<std::size_t>(i * k + labels[static_cast<std::size_t>(i)])]);
  }
  return out;
}

std::vector<int> argmax_rows(const Tensor& logits) {
  const std::int64_t b = logits.shape[0];
  const std::int64_t k = logits.shape[1];
  std::vector<int> out(static_cast<std::size_t>(b));
  for (std::int64_t i = 0; i < b; ++i) {
    int best = 0;
    double best_score = logits.values[static_cast<std::size_t>(i * k)];
    for (std::int64_t c = 1; c < k; ++c) {
      const double s = logits.values[static_cast<std::size_t>(i * k + c)];
      if (s > best_score) {
        best = static_cast<int>(c);
        best_score = s;
      }
    }
    out[static_cast<std::size_t>(i)] = best;
  }
  return out;
}

std::vector<int> identity_order(int k) {
  std::vector<int> order(static_cast<std::size_t>(k));
  std::iota(order.begin(), order.end(), 0);
  return order;
}

// Per-step batch outcome fed into the epoch aggregates.
struct StepResult {
  TensorId objective = -1;
  double ce = 0.0;
  double dual = 0.0;
  double overall = 0.0;
  std::int64_t anchor_count = 0;
  std::vector<int> predictions;  // one per example (first view only)
};

StepResult run_batch(Tape& tape, const TrainedModel& model, const EncoderHandles& handles,
                     const TensorId head_id, const std::vector<const Example*>& examples,
                     Rng& label_order_rng, bool train_mode, std::uint64_t dropout_seed) {
  const TrainConfig& cfg = model.config;
  const int k = model.vocab.num_classes();
  std::vector<int> labels;
  labels.reserve(examples.size());
  for (const Example* e : examples) labels.push_back(e->label);

  StepResult res;
  if (!is_baseline(cfg.mode)) {
    std::vector<EncodedSequence> seqs;
    seqs.reserve(examples.size());
    for (const Example* e : examples) {
      std::vector<int> order = identity_order(k);
      if (train_mode) label_order_rng.shuffle(order);
      seqs.push_back(
          build_augmented_sequence(model.vocab, e->text, order, cfg.encoder.max_len));
    }
    const Batch batch = collate_batch(seqs, labels);
    const TensorId hidden =
        encode_tokens(tape, handles, cfg.encoder, batch, train_mode, dropout_seed);
    const Representations rep = extract_representations(tape, hidden, batch);
    const Relations rel = build_relations(labels);

    const LossValue ce = loss_ce_modified(tape, rep.z, rep.theta_b3, labels);
    const LossValue dual = loss_dual(tape, rep.z, rep.theta_star, rel, cfg.tau);
    res.ce = ce.total;
    res.dual = dual.total;
    if (cfg.mode == Mode::DUALCL) {
      const LossValue overall = loss_overall(tape, ce, dual, cfg.lambda);
      res.objective = overall.handle;
      res.overall = overall.total;
    } else {  // DUALCL_NO_DUAL: dual is logged but not optimized
      res.objective = ce.handle;
      res.overall = ce.total;
    }
    res.anchor_count = batch.batch_size;
    res.predictions = predict(tape.value(rep.z), tape.value(rep.theta_b3));
    return res;
  }

  // Baseline modes share the plain [CLS] route and the global head.
  std::vector<EncodedSequence> seqs;
  seqs.reserve(examples.size());
  for (const Example* e : examples) {
    seqs.push_back(build_plain_sequence(model.vocab, e->text, cfg.encoder.max_len));
  }
  std::vector<EncodedSequence> collated = seqs;
  std::vector<int> collated_labels = labels;
  if (cfg.mode == Mode::CE_CL && train_mode) {
    // Dropout-twice: the same sentences appear as rows [0,B) and [B,2B)
    // and pick up independent dropout masks within one forward pass.
    collated.insert(collated.end(), seqs.begin(), seqs.end());
    collated_labels.insert(collated_labels.end(), labels.begin(), labels.end());
  }
  const Batch batch = collate_batch(collated, collated_labels);
  const TensorId hidden =
      encode_tokens(tape, handles, cfg.encoder, batch, train_mode, dropout_seed);
  const TensorId z = extract_cls_features(tape, hidden, batch);
  const TensorId logits = tape.matmul(z, head_id);

  const LossValue ce = softmax_ce(tape, logits, collated_labels);
  res.ce = ce.total;
  res.objective = ce.handle;
  res.overall = ce.total;
  res.anchor_count = batch.batch_size;

  if (cfg.mode == Mode::CE_CL && train_mode) {
    const std::int64_t b = static_cast<std::int64_t>(examples.size());
    std::vector<int> pairing(static_cast<std::size_t>(2 * b));
    for (std::int64_t i = 0; i < 2 * b; ++i) {
      pairing[static_cast<std::size_t>(i)] = static_cast<int>((i + b) % (2 * b));
    }
    const LossValue aux = loss_self(tape, z, pairing, cfg.tau);
    res.dual = aux.total;
    res.objective = tape.add(ce.handle, aux.handle);
    res.overall = tape.value(res.objective).values[0];
  } else if (cfg.mode == Mode::CE_SCL && train_mode) {
    const LossValue aux = loss_sup(tape, z, build_relations(collated_labels), cfg.tau);
    res.dual = aux.total;
    res.objective = tape.add(ce.handle, aux.handle);
    res.overall = tape.value(res.objective).values[0];
  }

  const Tensor& logit_values = tape.value(logits);
  const std::vector<int> all_preds = argmax_rows(logit_values);
  res.predictions.assign(all_preds.begin(),
                         all_preds.begin() + static_cast<std::ptrdiff_t>(examples.size()));
  return res;
}

}  // namespace

std::string mode_name(Mode mode) {
  switch (mode) {
    case Mode::CE: return "CE";
    case Mode::CE_CL: return "CE_CL";
    case Mode::CE_SCL: return "CE_SCL";
    case Mode::DUALCL: return "DUALCL";
    case Mode::DUALCL_NO_DUAL: return "DUALCL_NO_DUAL";
  }
  throw std::invalid_argument("mode_name: unknown mode");
}

Mode mode_from_name(const std::string& name) {
  if (name == "CE") return Mode::CE;
  if (name == "CE_CL") return Mode::CE_CL;
  if (name == "CE_SCL") return Mode::CE_SCL;
  if (name == "DUALCL") return Mode::DUALCL;
  if (name == "DUALCL_NO_DUAL") return Mode::DUALCL_NO_DUAL;
  throw std::invalid_argument("mode_from_name: unknown mode \"" + name + "\"");
}

void validate_train_config(const TrainConfig& config) {
  if (config.lambda < 0.0) {
    throw std::invalid_argument("train config: lambda must be nonnegative");
  }
  if (!(config.tau > 0.0)) {
    throw std::invalid_argument("train config: tau must be positive");
  }
  if (config.epochs < 1) {
    throw std::invalid_argument("train config: epochs must be at least 1");
  }
  if (config.batch_size < 1) {
    throw std::invalid_argument("train config: batch size must be at least 1");
  }
  if (!(config.lr_end > 0.0) || config.lr_start < config.lr_end) {
    throw std::invalid_argument("train config: need lr_start >= lr_end > 0");
  }
  if (config.weight_decay < 0.0) {
    throw std::invalid_argument("train config: weight decay must be nonnegative");
  }
  if (config.profile != "desk" && config.profile != "paper") {
    throw std::invalid_argument("train config: profile must be \"desk\" or \"paper\", got \"" +
                                config.profile + "\"");
  }
}

void adamw_step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads,
                OptimizerState& state, double lr, double weight_decay) {
  if (params.size() != grads.size()) {
    throw std::invalid_argument("adamw_step: " + std::to_string(params.size()) +
                                " parameters but " + std::to_string(grads.size()) +
                                " gradients");
  }
  if (!(lr > 0.0)) throw std::invalid_argument("adamw_step: learning rate must be positive");
  if (state.m.empty()) {
    for (const Tensor* p : params) {
      state.m.push_back(Tensor::zeros(p->shape));
      state.v.push_back(Tensor::zeros(p->shape));
    }
  }
  if (state.m.size() != params.size()) {
    throw std::invalid_argument("adamw_step: optimizer state tracks " +
                                std::to_string(state.m.size()) + " parameters, got " +
                                std::to_string(params.size()));
  }

  state.t += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    const Tensor& g = grads[i];
    if (g.shape != p.shape) {
      throw std::invalid_argument("adamw_step: gradient shape " + shape_to_string(g.shape) +
                                  " does not match parameter " + shape_to_string(p.shape));
    }
    Tensor& m = state.m[i];
    Tensor& v = state.v[i];
    for (std::size_t e = 0; e < p.values.size(); ++e) {
      const double ge = g.values[e];
      if (!std::isfinite(ge)) {
        throw std::runtime_error("adamw_step: non-finite gradient at parameter " +
                                 std::to_string(i));
      }
      m.values[e] = state.beta1 * m.values[e] + (1.0 - state.beta1) * ge;
      v.values[e] = state.beta2 * v.values[e] + (1.0 - state.beta2) * ge * ge;
      const double m_hat = m.values[e] / bc1;
      const double v_hat = v.values[e] / bc2;
      p.values[e] -= lr * (m_hat / (std::sqrt(v_hat) + state.eps) +
                           weight_decay * p.values[e]);
      if (!std::isfinite(p.values[e])) {
        throw std::runtime_error("adamw_step: non-finite parameter after update");
      }
    }
  }
}

double lr_at(std::int64_t step, std::int64_t total_steps, double lr_start, double lr_end) {
  if (step < 0 || step > total_steps) {
    throw std::invalid_argument("lr_at: step " + std::to_string(step) +
                                " outside schedule of " + std::to_string(total_steps));
  }
  if (total_steps == 0) return lr_start;
  const double f = static_cast<double>(step) / static_cast<double>(total_steps);
  return lr_start + (lr_end - lr_start) * f;
}

double clip_global_norm(std::vector<Tensor>& grads, double max_norm) {
  if (!(max_norm > 0.0)) {
    throw std::invalid_argument("clip_global_norm: max_norm must be positive");
  }
  double sq = 0.0;
  for (const Tensor& g : grads) {
    for (const double x : g.values) sq += x * x;
  }
  const double norm = std::sqrt(sq);
  if (norm <= max_norm) return 1.0;
  const double scale = max_norm / norm;
  for (Tensor& g : grads) {
    for (double& x : g.values) x *= scale;
  }
  return scale;
}

TrainedModel train(const TrainConfig& config, const Dataset& train_set,
                   const Dataset& test_set, const std::vector<std::string>& label_names,
                   const Vocabulary* vocab_override) {
  validate_train_config(config);
  if (train_set.examples.empty() || test_set.examples.empty()) {
    throw std::invalid_argument("train: empty dataset");
  }
  if (train_set.num_classes != test_set.num_classes) {
    throw std::invalid_argument("train: class-count mismatch between splits (" +
                                std::to_string(train_set.num_classes) + " vs " +
                                std::to_string(test_set.num_classes) + ")");
  }

  TrainedModel model;
  model.config = config;
  model.vocab = vocab_override ? *vocab_override : build_vocab(train_set, label_names);
  if (model.vocab.num_classes() != train_set.num_classes) {
    throw std::invalid_argument("train: vocabulary carries " +
                                std::to_string(model.vocab.num_classes()) +
                                " labels for a " + std::to_string(train_set.num_classes) +
                                "-class dataset");
  }
  model.config.encoder.vocab_size = static_cast<std::int64_t>(model.vocab.size());
  validate_config(model.config.encoder);

  model.encoder = init_params(model.config.encoder, derive_seed(config.seed, "init"));
  {
    Rng head_rng(derive_seed(config.seed, "head"));
    model.head_w = Tensor::zeros({model.config.encoder.d_model,
                                  static_cast<std::int64_t>(model.vocab.num_classes())});
    for (double& x : model.head_w.values) x = 0.02 * head_rng.next_normal();
    model.head_w.requires_grad = true;
  }

  const std::int64_t n = static_cast<std::int64_t>(train_set.examples.size());
  const std::int64_t steps_per_epoch = (n + config.batch_size - 1) / config.batch_size;
  const std::int64_t total_steps = steps_per_epoch * config.epochs;

  const std::vector<Tensor*> params = stepped_tensors(model);
  std::int64_t step_index = 0;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::vector<std::int64_t> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(derive_seed(config.seed, "shuffle", static_cast<std::uint64_t>(epoch)));
    shuffle_rng.shuffle(order);
    Rng label_order_rng(
        derive_seed(config.seed, "labelperm", static_cast<std::uint64_t>(epoch)));

    double ce_sum = 0.0, dual_sum = 0.0, overall_sum = 0.0;
    std::int64_t anchor_total = 0, correct = 0;
    double last_lr = config.lr_start;

    for (std::int64_t start = 0; start < n; start += config.batch_size) {
      const std::int64_t stop = std::min(n, start + config.batch_size);
      std::vector<const Example*> examples;
      std::vector<int> labels;
      for (std::int64_t i = start; i < stop; ++i) {
        examples.push_back(
            &train_set.examples[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])]);
        labels.push_back(examples.back()->label);
      }

      Tape tape;
      const std::vector<TensorId> ids = register_stepped(tape, model);
      const EncoderHandles handles = encoder_handles(model.config.encoder, ids, config.mode);
      const TensorId head_id = is_baseline(config.mode) ? ids.back() : -1;
      const std::uint64_t dropout_seed =
          derive_seed(config.seed, "dropout", static_cast<std::uint64_t>(epoch),
                      static_cast<std::uint64_t>(step_index));
      const StepResult res = run_batch(tape, model, handles, head_id, examples,
                                       label_order_rng, /*train_mode=*/true, dropout_seed);
      if (!std::isfinite(res.overall)) {
        throw std::runtime_error("train: non-finite objective at step " +
                                 std::to_string(step_index));
      }

      const GradientMap gm = tape.backward(res.objective);
      std::vector<Tensor> grads;
      grads.reserve(ids.size());
      for (const TensorId id : ids) grads.push_back(gm.at(id));
      clip_global_norm(grads, 1.0);

      last_lr = lr_at(step_index, total_steps - 1, config.lr_start, config.lr_end);
      adamw_step(params, grads, model.opt, last_lr, config.weight_decay);
      ++step_index;

      ce_sum += res.ce * static_cast<double>(res.anchor_count);
      dual_sum += res.dual * static_cast<double>(res.anchor_count);
      overall_sum += res.overall * static_cast<double>(res.anchor_count);
      anchor_total += res.anchor_count;
      for (std::size_t i = 0; i < res.predictions.size(); ++i) {
        if (res.predictions[i] == labels[i]) ++correct;
      }
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = last_lr;
    rec.ce = ce_sum / static_cast<double>(anchor_total);
    rec.dual = dual_sum / static_cast<double>(anchor_total);
    rec.overall = overall_sum / static_cast<double>(anchor_total);
    rec.train_acc = static_cast<double>(correct) / static_cast<double>(n);
    rec.test_acc = (config.eval_each_epoch || epoch == config.epochs)
                       ? evaluate(model, test_set).accuracy
                       : std::numeric_limits<double>::quiet_NaN();
    model.history.push_back(rec);
  }
  return model;
}

EvalResult evaluate(const TrainedModel& model, const Dataset& ds) {
  if (ds.examples.empty()) throw std::invalid_argument("evaluate: empty dataset");
  const int k = model.vocab.num_classes();
  if (ds.num_classes != k) {
    throw std::invalid_argument("evaluate: dataset has " + std::to_string(ds.num_classes) +
                                " classes but the model was trained with " +
                                std::to_string(k));
  }
  if (is_baseline(model.config.mode) &&
      (model.head_w.rank() != 2 || model.head_w.shape[1] != k)) {
    throw std::invalid_argument("evaluate: head shape " + shape_to_string(model.head_w.shape) +
                                " does not fit " + std::to_string(k) + " classes");
  }

  EvalResult res;
  res.predictions.reserve(ds.examples.size());
  const std::int64_t n = static_cast<std::int64_t>(ds.examples.size());
  Rng unused_rng(0);

  for (std::int64_t start = 0; start < n; start += model.config.batch_size) {
    const std::int64_t stop = std::min(n, start + model.config.batch_size);
    std::vector<const Example*> examples;
    for (std::int64_t i = start; i < stop; ++i) {
      examples.push_back(&ds.examples[static_cast<std::size_t>(i)]);
    }
    Tape tape;
    const std::vector<TensorId> ids = register_stepped(tape, model);
    const EncoderHandles handles =
        encoder_handles(model.config.encoder, ids, model.config.mode);
    const TensorId head_id = is_baseline(model.config.mode) ? ids.back() : -1;
    const StepResult step = run_batch(tape, model, handles, head_id, examples,
                                      unused_rng, /*train_mode=*/false, 0);
    res.predictions.insert(res.predictions.end(), step.predictions.begin(),
                           step.predictions.end());
  }

  std::vector<std::int64_t> per_class_total(static_cast<std::size_t>(k), 0);
  std::vector<std::int64_t> per_class_correct(static_cast<std::size_t>(k), 0);
  std::int64_t correct = 0;
  for (std::size_t i = 0; i < ds.examples.size(); ++i) {
    const int y = ds.examples[i].label;
    ++per_class_total[static_cast<std::size_t>(y)];
    if (res.predictions[i] == y) {
      ++correct;
      ++per_class_correct[static_cast<std::size_t>(y)];
    }
  }
  res.accuracy = static_cast<double>(correct) / static_cast<double>(n);
  res.per_class.resize(static_cast<std::size_t>(k), 0.0);
  for (int c = 0; c < k; ++c) {
    const std::size_t ci = static_cast<std::size_t>(c);
    if (per_class_total[ci] > 0) {
      res.per_class[ci] = static_cast<double>(per_class_correct[ci]) /
                          static_cast<double>(per_class_total[ci]);
    }
  }
  return res;
}

std::vector<SweepRow> low_resource_sweep(const TrainConfig& base,
                                         const std::vector<SweepMode>& modes,
                                         const Dataset& full_train, const Dataset& test,
                                         const std::vector<std::string>& label_names,
                                         const std::vector<int>& n_list,
                                         const std::vector<std::uint64_t>& seeds) {
  if (modes.empty() || n_list.empty() || seeds.empty()) {
    throw std::invalid_argument("low_resource_sweep: modes, counts, and seeds must be nonempty");
  }
  // Subsampled runs share the corpus-wide vocabulary so that test-set
  // tokens keep their ids regardless of which examples were drawn.
  const Vocabulary vocab = build_vocab(full_train, label_names);

  std::vector<SweepRow> rows;
  for (const SweepMode& sm : modes) {
    for (const int n : n_list) {
      std::vector<double> accs;
      accs.reserve(seeds.size());
      for (const std::uint64_t seed : seeds) {
        const Dataset subset = subsample_per_class(full_train, n, seed);
        TrainConfig cfg = base;
        cfg.mode = sm.mode;
        cfg.lambda = sm.lambda;
        cfg.seed = seed;
        cfg.eval_each_epoch = false;  // sweeps only consume the final accuracy
        const TrainedModel model = train(cfg, subset, test, label_names, &vocab);
        accs.push_back(model.history.back().test_acc);
      }
      SweepRow row;
      row.mode_label = sm.label.empty() ? mode_name(sm.mode) : sm.label;
      row.n = n;
      row.runs = static_cast<int>(accs.size());
      const double mean =
          std::accumulate(accs.begin(), accs.end(), 0.0) / static_cast<double>(accs.size());
      row.mean_acc = mean;
      if (accs.size() > 1) {
        double sq = 0.0;
        for (const double a : accs) sq += (a - mean) * (a - mean);
        row.std_acc = std::sqrt(sq / static_cast<double>(accs.size() - 1));
      }
      rows.push_back(row);
    }
  }
  return rows;
}

std::string history_to_csv(const TrainHistory& history) {
  std::string out = "epoch,lr,ce,dual,overall,train_acc,test_acc\n";
  for (const EpochRecord& r : history) {
    out += std::to_string(r.epoch) + "," + fmt_full(r.lr) + "," + fmt_full(r.ce) + "," +
           fmt_full(r.dual) + "," + fmt_full(r.overall) + "," + fmt_full(r.train_acc) + "," +
           fmt_full(r.test_acc) + "\n";
  }
  return out;
}

std::string sweep_to_csv(const std::vector<SweepRow>& rows) {
  std::string out = "mode,n,mean_acc,std_acc,runs\n";
  for (const SweepRow& r : rows) {
    out += r.mode_label + "," + std::to_string(r.n) + "," + fmt_full(r.mean_acc) + "," +
           fmt_full(r.std_acc) + "," + std::to_string(r.runs) + "\n";
  }
  return out;
}

NamedTensors pack_model(const TrainedModel& model) {
  NamedTensors out;
  for_each_param(model.encoder,
                 [&](const std::string& n, const Tensor& t) { out.emplace_back(n, t); });
  out.emplace_back("head.w", model.head_w);
  out.emplace_back("opt.t", Tensor::from({1}, {static_cast<double>(model.opt.t)}));
  const std::vector<std::string> names = stepped_names(model.encoder, model.config.mode);
  if (!model.opt.m.empty()) {
    if (model.opt.m.size() != names.size()) {
      throw std::invalid_argument("pack_model: optimizer tracks " +
                                  std::to_string(model.opt.m.size()) + " tensors, expected " +
                                  std::to_string(names.size()));
    }
    for (std::size_t i = 0; i < names.size(); ++i) {
      out.emplace_back("opt.m." + names[i], model.opt.m[i]);
      out.emplace_back("opt.v." + names[i], model.opt.v[i]);
    }
  }
  return out;
}

void unpack_model(TrainedModel& model, const NamedTensors& tensors) {
  std::size_t cursor = 0;
  const auto take = [&](const std::string& name, const std::vector<std::int64_t>& shape,
                        Tensor& dst) {
    if (cursor >= tensors.size()) {
      throw std::runtime_error("checkpoint: missing tensor \"" + name + "\"");
    }
    const auto& [got_name, got] = tensors[cursor];
    if (got_name != name) {
      throw std::runtime_error("checkpoint: expected tensor \"" + name + "\", found \"" +
                               got_name + "\"");
    }
    if (got.shape != shape) {
      throw std::runtime_error("checkpoint: tensor \"" + name + "\" has shape " +
                               shape_to_string(got.shape) + ", expected " +
                               shape_to_string(shape));
    }
    const bool keep_grad = dst.requires_grad;
    dst = got;
    dst.requires_grad = keep_grad;
    ++cursor;
  };

  for_each_param(model.encoder,
                 [&](const std::string& n, Tensor& t) { take(n, t.shape, t); });
  take("head.w", model.head_w.shape, model.head_w);

  Tensor t_holder = Tensor::zeros({1});
  take("opt.t", {1}, t_holder);
  model.opt.t = static_cast<std::int64_t>(t_holder.values[0]);

  // Moment tensors follow for every parameter the mode steps, in canonical
  // order and with the parameter's own shape.
  std::vector<std::pair<std::string, std::vector<std::int64_t>>> stepped;
  for_each_param(model.encoder, [&](const std::string& n, const Tensor& t) {
    stepped.emplace_back(n, t.shape);
  });
  if (is_baseline(model.config.mode)) stepped.emplace_back("head.w", model.head_w.shape);

  if (cursor < tensors.size()) {
    model.opt.m.clear();
    model.opt.v.clear();
    for (const auto& [name, shape] : stepped) {
      Tensor m = Tensor::zeros(shape);
      Tensor v = Tensor::zeros(shape);
      take("opt.m." + name, shape, m);
      take("opt.v." + name, shape, v);
      model.opt.m.push_back(std::move(m));
      model.opt.v.push_back(std::move(v));
    }
  } else if (model.opt.t != 0) {
    throw std::runtime_error("checkpoint: optimizer step count without moment tensors");
  }
  if (cursor != tensors.size()) {
    throw std::runtime_error("checkpoint: unexpected extra tensor \"" +
                             tensors[cursor].first + "\"");
  }
}

}  // namespace dualcl
