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

#include "dualcl/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "dualcl/analysis.hpp"
#include "dualcl/checkpoint.hpp"
#include "dualcl/encoder.hpp"
#include "dualcl/tape.hpp"
#include "dualcl/text.hpp"

namespace dualcl {
namespace {

std::string fmt_g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_g(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(s);
  while (std::getline(in, field, sep)) out.push_back(field);
  if (!s.empty() && s.back() == sep) out.push_back("");
  return out;
}

std::string join(const std::vector<std::string>& parts, char sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i > 0) out += sep;
    out += parts[i];
  }
  return out;
}

double parse_double(const std::string& where, const std::string& v) {
  try {
    std::size_t pos = 0;
    double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("");
    return d;
  } catch (...) {
    throw UsageError("unparsable value for " + where + ": " + v);
  }
}

std::int64_t parse_i64(const std::string& where, const std::string& v) {
  try {
    std::size_t pos = 0;
    long long n = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("");
    return static_cast<std::int64_t>(n);
  } catch (...) {
    throw UsageError("unparsable value for " + where + ": " + v);
  }
}

std::uint64_t parse_u64(const std::string& where, const std::string& v) {
  try {
    if (v.find('-') != std::string::npos) throw std::invalid_argument("");
    std::size_t pos = 0;
    unsigned long long n = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("");
    return static_cast<std::uint64_t>(n);
  } catch (...) {
    throw UsageError("unparsable value for " + where + ": " + v);
  }
}

// The profile picks the optimizer schedule and batch size; explicit flags or
// config-file entries can still override each piece afterwards.
void apply_profile(TrainConfig& t, const std::string& profile) {
  if (profile == "desk") {
    t.lr_start = 3e-4;
    t.lr_end = 3e-5;
    t.batch_size = 16;
  } else if (profile == "paper") {
    t.lr_start = 2e-5;
    t.lr_end = 1e-5;
    t.batch_size = 64;
  } else {
    throw UsageError("unparsable value for profile: " + profile +
                     " (expected desk or paper)");
  }
  t.profile = profile;
}

std::vector<std::string> parse_labels(const std::string& where, const std::string& v) {
  std::vector<std::string> names = split(v, ',');
  if (names.empty()) throw UsageError("empty label list for " + where);
  for (auto& n : names) {
    n = trim(n);
    if (n.empty()) throw UsageError("empty label name in " + where + ": " + v);
  }
  return names;
}

std::vector<std::pair<std::string, std::string>> read_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw UsageError("cannot read config file " + path);
  std::vector<std::pair<std::string, std::string>> entries;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError(path + ":" + std::to_string(lineno) +
                       ": expected key = value, got: " + line);
    }
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw UsageError(path + ":" + std::to_string(lineno) + ": empty key");
    }
    entries.emplace_back(std::move(key), std::move(value));
  }
  return entries;
}

Mode parse_mode(const std::string& where, const std::string& v) {
  try {
    return mode_from_name(v);
  } catch (const std::exception& e) {
    throw UsageError(std::string(e.what()) + " for " + where);
  }
}

// Applies one config-file entry. "profile" is resolved before this runs and
// is skipped here; any key outside the known set is an error.
void apply_file_key(RunConfig& rc, const std::string& key, const std::string& value) {
  if (key == "profile") return;
  if (key == "out") {
    rc.out_dir = value;
  } else if (key == "seed") {
    rc.train.seed = parse_u64("key seed", value);
  } else if (key == "mode") {
    rc.train.mode = parse_mode("key mode", value);
  } else if (key == "lambda") {
    rc.train.lambda = parse_double("key lambda", value);
  } else if (key == "tau") {
    rc.train.tau = parse_double("key tau", value);
  } else if (key == "epochs") {
    rc.train.epochs = static_cast<int>(parse_i64("key epochs", value));
  } else if (key == "batch-size") {
    rc.train.batch_size = parse_i64("key batch-size", value);
  } else if (key == "train") {
    rc.train_path = value;
  } else if (key == "test") {
    rc.test_path = value;
  } else if (key == "labels") {
    rc.label_names = parse_labels("key labels", value);
  } else if (key == "checkpoint") {
    rc.checkpoint_path = value;
  } else if (key == "sweep-counts") {
    std::vector<int> counts;
    for (const auto& part : split(value, ',')) {
      std::int64_t n = parse_i64("key sweep-counts", trim(part));
      if (n < 1) throw UsageError("sweep-counts entries must be positive: " + value);
      counts.push_back(static_cast<int>(n));
    }
    if (counts.empty()) throw UsageError("sweep-counts must list at least one size");
    rc.sweep_counts = counts;
  } else if (key == "sweep-seeds") {
    std::int64_t n = parse_i64("key sweep-seeds", value);
    if (n < 1) throw UsageError("sweep-seeds must be positive: " + value);
    rc.sweep_seeds = static_cast<int>(n);
  } else {
    throw UsageError("unknown key " + key);
  }
}

void require_flags(const RunConfig& rc, bool need_checkpoint, bool need_train,
                   bool need_test) {
  if (need_checkpoint && rc.checkpoint_path.empty()) {
    throw UsageError(rc.command + " requires --checkpoint");
  }
  if (need_train && rc.train_path.empty()) {
    throw UsageError(rc.command + " requires --train");
  }
  if (need_test && rc.test_path.empty()) {
    throw UsageError(rc.command + " requires --test");
  }
}

// ---------------------------------------------------------------------------
// Output helpers
// ---------------------------------------------------------------------------

std::string resolve_out_dir(const RunConfig& cfg) {
  if (!cfg.out_dir.empty()) return cfg.out_dir;
  std::time_t now = std::time(nullptr);
  std::tm tm_buf{};
  localtime_r(&now, &tm_buf);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y%m%d-%H%M%S", &tm_buf);
  return std::string("run-") + stamp + "-seed" + std::to_string(cfg.train.seed);
}

std::string ensure_out_dir(const RunConfig& cfg) {
  std::string dir = resolve_out_dir(cfg);
  std::filesystem::create_directories(dir);
  return dir;
}

void write_text_file(const std::string& path, const std::string& content,
                     std::ostream& out) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << content;
  f.flush();
  if (!f) throw std::runtime_error("write failed for " + path);
  out << path << "\n";
}

// ---------------------------------------------------------------------------
// Dataset loading
// ---------------------------------------------------------------------------

int max_label_in(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open dataset " + path);
  int max_label = -1;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::size_t tab = line.find('\t');
    if (tab == std::string::npos) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": expected label<TAB>text");
    }
    try {
      max_label = std::max(max_label, std::stoi(line.substr(0, tab)));
    } catch (...) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": unparsable label " + line.substr(0, tab));
    }
  }
  if (max_label < 0) throw std::runtime_error(path + ": no examples");
  return max_label;
}

struct LoadedData {
  Dataset train;
  Dataset test;
  std::vector<std::string> labels;
};

LoadedData load_datasets(const RunConfig& cfg, bool need_test) {
  LoadedData d;
  d.labels = cfg.label_names;
  if (d.labels.empty()) {
    int max_label = max_label_in(cfg.train_path);
    if (need_test) max_label = std::max(max_label, max_label_in(cfg.test_path));
    for (int k = 0; k <= max_label; ++k) d.labels.push_back("class" + std::to_string(k));
  }
  const int num_classes = static_cast<int>(d.labels.size());
  d.train = load_tsv(cfg.train_path, num_classes);
  if (need_test) d.test = load_tsv(cfg.test_path, num_classes);
  return d;
}

// Written next to each trained checkpoint so later commands can reproduce the
// exact settings with --config <run>/config.txt.
std::string resolved_config_text(const RunConfig& cfg, const std::vector<std::string>& labels) {
  std::ostringstream s;
  s << "# resolved run settings\n";
  s << "mode = " << mode_name(cfg.train.mode) << "\n";
  s << "profile = " << cfg.train.profile << "\n";
  s << "lambda = " << fmt_g17(cfg.train.lambda) << "\n";
  s << "tau = " << fmt_g17(cfg.train.tau) << "\n";
  s << "epochs = " << cfg.train.epochs << "\n";
  s << "batch-size = " << cfg.train.batch_size << "\n";
  s << "seed = " << cfg.train.seed << "\n";
  s << "labels = " << join(labels, ',') << "\n";
  return s.str();
}

// ---------------------------------------------------------------------------
// Model restoration and batched feature extraction
// ---------------------------------------------------------------------------

bool dual_mode(Mode mode) {
  return mode == Mode::DUALCL || mode == Mode::DUALCL_NO_DUAL;
}

TrainedModel restore_model(const RunConfig& cfg, const LoadedData& data) {
  TrainedModel m;
  m.config = cfg.train;
  m.vocab = build_vocab(data.train, data.labels);
  m.config.encoder.vocab_size = m.vocab.size();
  m.encoder = init_params(m.config.encoder, 0);
  m.head_w = Tensor::zeros({m.config.encoder.d_model,
                            static_cast<std::int64_t>(data.labels.size())});
  m.head_w.requires_grad = true;
  unpack_model(m, load_checkpoint(cfg.checkpoint_path));
  return m;
}

std::vector<int> identity_order(int num_classes) {
  std::vector<int> order(static_cast<std::size_t>(num_classes));
  for (int k = 0; k < num_classes; ++k) order[static_cast<std::size_t>(k)] = k;
  return order;
}

// Unit-normalized [CLS] features for every example, plus the label-matched
// classifier columns when the model carries per-example classifiers.
struct DatasetReps {
  std::int64_t n = 0;
  std::int64_t d = 0;
  std::vector<double> z;           // n*d row-major
  std::vector<double> theta_star;  // n*d row-major; empty for baseline modes
  std::vector<int> labels;
};

DatasetReps collect_reps(const TrainedModel& model, const Dataset& ds) {
  const EncoderConfig& enc = model.config.encoder;
  const bool dual = dual_mode(model.config.mode);
  const int num_classes = model.vocab.num_classes();
  const std::vector<int> order = identity_order(num_classes);
  const std::int64_t n = ds.size();
  const std::int64_t bs = model.config.batch_size;

  DatasetReps reps;
  reps.n = n;
  reps.d = enc.d_model;
  reps.z.reserve(static_cast<std::size_t>(n * enc.d_model));
  if (dual) reps.theta_star.reserve(static_cast<std::size_t>(n * enc.d_model));

  for (std::int64_t start = 0; start < n; start += bs) {
    const std::int64_t stop = std::min(n, start + bs);
    std::vector<EncodedSequence> seqs;
    std::vector<int> labels;
    for (std::int64_t i = start; i < stop; ++i) {
      const Example& ex = ds.examples[static_cast<std::size_t>(i)];
      seqs.push_back(dual ? build_augmented_sequence(model.vocab, ex.text, order, enc.max_len)
                          : build_plain_sequence(model.vocab, ex.text, enc.max_len));
      labels.push_back(ex.label);
      reps.labels.push_back(ex.label);
    }
    Batch batch = collate_batch(seqs, labels);

    Tape tape;
    std::vector<TensorId> flat;
    for_each_param(model.encoder,
                   [&](const std::string&, const Tensor& t) { flat.push_back(tape.tensor(t)); });
    EncoderHandles handles = handles_from_flat(enc, flat);
    TensorId hidden = encode_tokens(tape, handles, enc, batch, /*train_mode=*/false, 0);
    if (dual) {
      Representations r = extract_representations(tape, hidden, batch);
      const Tensor& zv = tape.value(r.z);
      const Tensor& tv = tape.value(r.theta_star);
      reps.z.insert(reps.z.end(), zv.values.begin(), zv.values.end());
      reps.theta_star.insert(reps.theta_star.end(), tv.values.begin(), tv.values.end());
    } else {
      const Tensor& zv = tape.value(extract_cls_features(tape, hidden, batch));
      reps.z.insert(reps.z.end(), zv.values.begin(), zv.values.end());
    }
  }
  return reps;
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

void cmd_train(const RunConfig& cfg, std::ostream& out) {
  LoadedData data = load_datasets(cfg, /*need_test=*/true);
  const std::string dir = ensure_out_dir(cfg);
  TrainedModel model = train(cfg.train, data.train, data.test, data.labels);
  write_text_file(dir + "/config.txt", resolved_config_text(cfg, data.labels), out);
  write_text_file(dir + "/history.csv", history_to_csv(model.history), out);
  const std::string ckpt = dir + "/model.ckpt";
  save_checkpoint(ckpt, pack_model(model));
  out << ckpt << "\n";
}

void cmd_eval(const RunConfig& cfg, std::ostream& out) {
  LoadedData data = load_datasets(cfg, /*need_test=*/true);
  TrainedModel model = restore_model(cfg, data);
  EvalResult result = evaluate(model, data.test);
  out << "accuracy " << fmt_g17(result.accuracy) << "\n";
}

void cmd_sweep(const RunConfig& cfg, std::ostream& out) {
  LoadedData data = load_datasets(cfg, /*need_test=*/true);

  std::vector<SweepMode> modes;
  modes.push_back({Mode::CE, cfg.train.lambda, "CE"});
  modes.push_back({Mode::CE_SCL, cfg.train.lambda, "CE_SCL"});
  modes.push_back({Mode::CE_CL, cfg.train.lambda, "CE_CL"});
  modes.push_back({Mode::DUALCL_NO_DUAL, cfg.train.lambda, "DUALCL_NO_DUAL"});
  const std::vector<double> grid{0.01, 0.05, 0.1};
  bool in_grid = false;
  for (double g : grid) in_grid = in_grid || g == cfg.train.lambda;
  if (!in_grid) {
    modes.push_back(
        {Mode::DUALCL, cfg.train.lambda, "DUALCL(lambda=" + fmt_g(cfg.train.lambda) + ")"});
  }
  for (double g : grid) {
    modes.push_back({Mode::DUALCL, g, "DUALCL(lambda=" + fmt_g(g) + ")"});
  }

  std::vector<std::uint64_t> seeds;
  for (int s = 0; s < cfg.sweep_seeds; ++s) {
    seeds.push_back(cfg.train.seed + static_cast<std::uint64_t>(s));
  }

  std::vector<SweepRow> rows = low_resource_sweep(cfg.train, modes, data.train, data.test,
                                                  data.labels, cfg.sweep_counts, seeds);
  const std::string dir = ensure_out_dir(cfg);
  write_text_file(dir + "/sweep.csv", sweep_to_csv(rows), out);
}

void cmd_export_repr(const RunConfig& cfg, std::ostream& out) {
  LoadedData data = load_datasets(cfg, /*need_test=*/true);
  TrainedModel model = restore_model(cfg, data);
  DatasetReps reps = collect_reps(model, data.test);

  // One shared projection over features and classifiers so both mark families
  // land in a comparable plane.
  std::vector<double> stacked = reps.z;
  std::vector<int> class_ids = reps.labels;
  std::vector<MarkKind> kinds(static_cast<std::size_t>(reps.n), MarkKind::feature);
  if (dual_mode(model.config.mode)) {
    stacked.insert(stacked.end(), reps.theta_star.begin(), reps.theta_star.end());
    class_ids.insert(class_ids.end(), reps.labels.begin(), reps.labels.end());
    kinds.insert(kinds.end(), static_cast<std::size_t>(reps.n), MarkKind::classifier);
  } else {
    // Baseline models have one global classifier column per class.
    const std::int64_t k = model.head_w.shape[1];
    for (std::int64_t c = 0; c < k; ++c) {
      for (std::int64_t r = 0; r < reps.d; ++r) {
        stacked.push_back(model.head_w.values[static_cast<std::size_t>(r * k + c)]);
      }
      class_ids.push_back(static_cast<int>(c));
      kinds.push_back(MarkKind::classifier);
    }
  }
  const std::int64_t rows = static_cast<std::int64_t>(kinds.size());
  Tensor points = Tensor::from({rows, reps.d}, stacked);
  Tensor proj = project_2d(points);
  std::vector<std::pair<double, double>> coords;
  coords.reserve(static_cast<std::size_t>(rows));
  for (std::int64_t i = 0; i < rows; ++i) {
    coords.emplace_back(proj.values[static_cast<std::size_t>(2 * i)],
                        proj.values[static_cast<std::size_t>(2 * i + 1)]);
  }

  const std::string dir = ensure_out_dir(cfg);
  write_text_file(dir + "/representations.csv",
                  representation_csv(coords, class_ids, kinds, data.labels), out);
  write_text_file(dir + "/representations.svg",
                  render_svg_scatter(coords, class_ids, kinds), out);
}

void cmd_attention(const RunConfig& cfg, std::ostream& out) {
  LoadedData data = load_datasets(cfg, /*need_test=*/true);
  TrainedModel model = restore_model(cfg, data);
  const EncoderConfig& enc = model.config.encoder;
  const bool dual = dual_mode(model.config.mode);
  const std::vector<int> order = identity_order(model.vocab.num_classes());
  const std::string dir = ensure_out_dir(cfg);

  std::int64_t label_prefix = 0;
  for (const auto& toks : model.vocab.label_token_ids) {
    label_prefix += static_cast<std::int64_t>(toks.size());
  }

  for (std::size_t i = 0; i < data.test.examples.size(); ++i) {
    const Example& ex = data.test.examples[i];
    EncodedSequence seq =
        dual ? build_augmented_sequence(model.vocab, ex.text, order, enc.max_len)
             : build_plain_sequence(model.vocab, ex.text, enc.max_len);
    Batch batch = collate_batch({seq}, {ex.label});

    Tape tape;
    std::vector<TensorId> flat;
    for_each_param(model.encoder,
                   [&](const std::string&, const Tensor& t) { flat.push_back(tape.tensor(t)); });
    EncoderHandles handles = handles_from_flat(enc, flat);
    const Tensor& hv = tape.value(encode_tokens(tape, handles, enc, batch,
                                                /*train_mode=*/false, 0));

    const std::int64_t len = batch.seq_len;
    Tensor hidden_rows = Tensor::from({len, enc.d_model}, hv.values);
    std::vector<double> cls(hv.values.begin(), hv.values.begin() + enc.d_model);
    Tensor cls_feature = Tensor::from({enc.d_model}, cls);

    // Sentence tokens sit between the prefix ([CLS]; plus the label block and
    // its separator when augmented) and the final separator.
    const std::int64_t first = dual ? 1 + label_prefix + 1 : 1;
    std::vector<std::int64_t> positions;
    for (std::int64_t t = first; t + 1 < len; ++t) positions.push_back(t);

    std::vector<std::string> tokens = tokenize(ex.text);
    tokens.resize(positions.size());
    std::vector<double> scores = attention_scores(hidden_rows, cls_feature, positions);

    char name[48];
    std::snprintf(name, sizeof name, "attention_%03zu.csv", i);
    write_text_file(dir + "/" + name, attention_csv(tokens, scores), out);
  }
}

void cmd_check_bound(const RunConfig& cfg, std::ostream& out) {
  if (!dual_mode(cfg.train.mode)) {
    throw std::runtime_error(
        "check-bound needs per-example classifiers (mode DUALCL or DUALCL_NO_DUAL), got " +
        mode_name(cfg.train.mode));
  }
  LoadedData data = load_datasets(cfg, /*need_test=*/true);
  TrainedModel model = restore_model(cfg, data);
  DatasetReps reps = collect_reps(model, data.test);
  Tensor z = Tensor::from({reps.n, reps.d}, reps.z);
  Tensor theta_star = Tensor::from({reps.n, reps.d}, reps.theta_star);
  BoundReport report = check_mi_bound(z, theta_star, reps.labels);
  const std::string dir = ensure_out_dir(cfg);
  write_text_file(dir + "/bound_report.txt", bound_report_text(report), out);
}

void cmd_synth(const RunConfig& cfg, std::ostream& out) {
  SynthSpec spec;
  spec.seed = cfg.train.seed;
  SynthData data = make_synthetic(spec);
  const std::string dir = ensure_out_dir(cfg);
  const std::string train_path = dir + "/synth_train.tsv";
  const std::string test_path = dir + "/synth_test.tsv";
  write_tsv(train_path, data.train);
  out << train_path << "\n";
  write_tsv(test_path, data.test);
  out << test_path << "\n";
  write_text_file(dir + "/synth_labels.txt", join(data.label_names, ',') + "\n", out);
}

}  // namespace

RunConfig parse_config(const std::vector<std::string>& args) {
  CLI::App app{"dual contrastive learning for supervised text classification"};
  app.name("dualcl");
  app.require_subcommand(1);

  std::string f_config, f_out, f_seed, f_mode, f_lambda, f_tau, f_profile, f_epochs,
      f_batch, f_train, f_test, f_labels, f_checkpoint;
  CLI::Option* o_config = app.add_option("--config", f_config, "settings file (key = value)");
  CLI::Option* o_out = app.add_option("--out", f_out, "output directory");
  CLI::Option* o_seed = app.add_option("--seed", f_seed, "master RNG seed");
  CLI::Option* o_mode = app.add_option(
      "--mode", f_mode, "DUALCL, DUALCL_NO_DUAL, CE, CE_SCL, or CE_CL");
  CLI::Option* o_lambda = app.add_option("--lambda", f_lambda, "dual-term weight");
  CLI::Option* o_tau = app.add_option("--tau", f_tau, "contrastive temperature");
  CLI::Option* o_profile = app.add_option("--profile", f_profile, "desk or paper");
  CLI::Option* o_epochs = app.add_option("--epochs", f_epochs, "training epochs");
  CLI::Option* o_batch = app.add_option("--batch-size", f_batch, "minibatch size");
  CLI::Option* o_train = app.add_option("--train", f_train, "training TSV (label<TAB>text)");
  CLI::Option* o_test = app.add_option("--test", f_test, "test TSV (label<TAB>text)");
  CLI::Option* o_labels = app.add_option("--labels", f_labels, "comma-separated class names");
  CLI::Option* o_checkpoint = app.add_option("--checkpoint", f_checkpoint, "model checkpoint");

  const std::vector<std::pair<std::string, std::string>> commands{
      {"train", "train a model and write checkpoint, settings, and history"},
      {"eval", "restore a checkpoint and print test accuracy"},
      {"sweep", "low-resource accuracy table over modes, sizes, and seeds"},
      {"export-repr", "project features and classifiers to 2D (CSV + SVG)"},
      {"attention", "per-token relevance scores for each test sentence"},
      {"check-bound", "evaluate the mutual-information bound diagnostic"},
      {"synth", "generate a synthetic keyword classification corpus"},
  };
  for (const auto& [name, help] : commands) {
    app.add_subcommand(name, help)->fallthrough();
  }

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(std::move(reversed));
  } catch (const CLI::CallForHelp&) {
    throw HelpRequested{app.help()};
  } catch (const CLI::ParseError& e) {
    throw UsageError(e.what());
  }

  RunConfig rc;
  rc.command = app.get_subcommands().front()->get_name();
  rc.config_path = f_config;

  std::vector<std::pair<std::string, std::string>> file_kv;
  if (o_config->count() > 0) file_kv = read_config_file(f_config);

  // The profile resolves first (flag beats file beats the desk default) so
  // that explicit schedule overrides below always win over its presets.
  std::string profile = "desk";
  for (const auto& [k, v] : file_kv) {
    if (k == "profile") profile = v;
  }
  if (o_profile->count() > 0) profile = f_profile;
  apply_profile(rc.train, profile);

  for (const auto& [k, v] : file_kv) apply_file_key(rc, k, v);

  if (o_out->count() > 0) rc.out_dir = f_out;
  if (o_seed->count() > 0) rc.train.seed = parse_u64("--seed", f_seed);
  if (o_mode->count() > 0) rc.train.mode = parse_mode("--mode", f_mode);
  if (o_lambda->count() > 0) rc.train.lambda = parse_double("--lambda", f_lambda);
  if (o_tau->count() > 0) rc.train.tau = parse_double("--tau", f_tau);
  if (o_epochs->count() > 0) {
    rc.train.epochs = static_cast<int>(parse_i64("--epochs", f_epochs));
  }
  if (o_batch->count() > 0) rc.train.batch_size = parse_i64("--batch-size", f_batch);
  if (o_train->count() > 0) rc.train_path = f_train;
  if (o_test->count() > 0) rc.test_path = f_test;
  if (o_labels->count() > 0) rc.label_names = parse_labels("--labels", f_labels);
  if (o_checkpoint->count() > 0) rc.checkpoint_path = f_checkpoint;

  try {
    validate_train_config(rc.train);
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }

  if (rc.command == "train" || rc.command == "sweep") {
    require_flags(rc, false, true, true);
  } else if (rc.command == "eval" || rc.command == "export-repr" ||
             rc.command == "attention" || rc.command == "check-bound") {
    require_flags(rc, true, true, true);
  }
  return rc;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  RunConfig cfg;
  try {
    cfg = parse_config(args);
  } catch (const HelpRequested& h) {
    out << h.text;
    return 0;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (cfg.command == "train") {
      cmd_train(cfg, out);
    } else if (cfg.command == "eval") {
      cmd_eval(cfg, out);
    } else if (cfg.command == "sweep") {
      cmd_sweep(cfg, out);
    } else if (cfg.command == "export-repr") {
      cmd_export_repr(cfg, out);
    } else if (cfg.command == "attention") {
      cmd_attention(cfg, out);
    } else if (cfg.command == "check-bound") {
      cmd_check_bound(cfg, out);
    } else {
      cmd_synth(cfg, out);
    }
    return 0;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace dualcl
