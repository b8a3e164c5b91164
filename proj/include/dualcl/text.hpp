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
#include <unordered_map>
#include <vector>

namespace dualcl {

// ---- datasets -------------------------------------------------------------

struct Example {
  std::string text;
  int label = 0;
};

struct Dataset {
  std::vector<Example> examples;
  int num_classes = 0;

  std::int64_t size() const { return static_cast<std::int64_t>(examples.size()); }
};

// Reads "label<TAB>text" lines. Labels must be integers in [0, num_classes);
// text must be valid UTF-8 and nonempty after trimming. Errors carry the
// 1-based line number.
Dataset load_tsv(const std::string& path, int num_classes);

// Writes the same format load_tsv reads.
void write_tsv(const std::string& path, const Dataset& ds);

// Lowercases ASCII letters, splits on whitespace, and splits ASCII
// punctuation into single-character tokens. Bytes >= 0x80 (multi-byte UTF-8)
// are treated as word characters and left untouched.
std::vector<std::string> tokenize(const std::string& text);

// Byte offset of the first invalid UTF-8 sequence, or -1 if well-formed.
std::int64_t find_invalid_utf8(const std::string& s);

// ---- vocabulary -----------------------------------------------------------

// Token ids are fixed as: [PAD]=0, [UNK]=1, [CLS]=2, [SEP]=3, then the label
// name tokens in label order, then corpus tokens by descending frequency
// (ties broken lexicographically).
struct Vocabulary {
  static constexpr std::int64_t kPad = 0;
  static constexpr std::int64_t kUnk = 1;
  static constexpr std::int64_t kCls = 2;
  static constexpr std::int64_t kSep = 3;

  std::vector<std::string> id_to_token;
  std::unordered_map<std::string, std::int64_t> token_to_id;
  std::vector<std::string> label_names;                     // K raw names
  std::vector<std::vector<std::int64_t>> label_token_ids;   // K token id lists

  std::int64_t size() const { return static_cast<std::int64_t>(id_to_token.size()); }
  int num_classes() const { return static_cast<int>(label_token_ids.size()); }
};

// min_freq filters corpus tokens (not specials or label tokens); max_size
// caps the total vocabulary size.
Vocabulary build_vocab(const Dataset& ds, const std::vector<std::string>& label_names,
                       std::int64_t min_freq = 1, std::int64_t max_size = 1 << 20);

// Tokenizes and maps to ids; unknown tokens become [UNK]. No specials added.
std::vector<std::int64_t> encode_text(const Vocabulary& vocab, const std::string& text);

// ---- sequence building ------------------------------------------------------

struct EncodedSequence {
  std::vector<std::int64_t> ids;
  bool augmented = false;
  // Positions of each class's label-name tokens within ids, indexed by
  // canonical class id (not by the shuffled display order).
  std::vector<std::vector<std::int64_t>> label_positions;
};

// Label-aware input: [CLS] <label names in label_order> [SEP] <text> [SEP].
// label_order must be a permutation of 0..K-1. Text tokens are truncated to
// fit max_len; the label block is never truncated, and max_len must leave
// room for at least one text token.
EncodedSequence build_augmented_sequence(const Vocabulary& vocab, const std::string& text,
                                         const std::vector<int>& label_order,
                                         std::int64_t max_len);

// Plain input for baseline modes: [CLS] <text> [SEP], truncated to max_len.
EncodedSequence build_plain_sequence(const Vocabulary& vocab, const std::string& text,
                                     std::int64_t max_len);

// ---- batching ----------------------------------------------------------------

struct Batch {
  std::int64_t batch_size = 0;
  std::int64_t seq_len = 0;                 // padded length
  std::vector<std::int64_t> token_ids;      // batch_size * seq_len, [PAD]-padded
  std::vector<double> pad_mask;             // 1 for real tokens, 0 for padding
  std::vector<int> labels;
  bool augmented = false;
  int num_classes = 0;                      // 0 for plain batches
  // [example][class][token positions]; empty for plain batches.
  std::vector<std::vector<std::vector<std::int64_t>>> label_positions;
};

// Pads sequences to the longest in the batch. All sequences must be of the
// same kind (augmented or plain) and, when augmented, the same class count.
Batch collate_batch(const std::vector<EncodedSequence>& seqs, const std::vector<int>& labels);

// ---- sampling / synthetic data -------------------------------------------------

// Keeps exactly n examples of every class, chosen by a seeded shuffle of
// each class's members (class-major output order). Errors if a class has
// fewer than n examples.
Dataset subsample_per_class(const Dataset& ds, std::int64_t n, std::uint64_t seed);

// Synthetic classification corpus: each class owns a small keyword pool;
// sentences mix class keywords (with probability keyword_prob per slot,
// at least one guaranteed) into a shared filler vocabulary.
struct SynthSpec {
  int num_classes = 2;
  std::int64_t train_per_class = 1000;
  std::int64_t test_per_class = 500;
  std::int64_t keywords_per_class = 6;
  std::int64_t filler_vocab = 40;
  std::int64_t min_words = 4;
  std::int64_t max_words = 10;
  double keyword_prob = 0.3;
  std::uint64_t seed = 1;
};

struct SynthData {
  Dataset train;
  Dataset test;
  std::vector<std::string> label_names;
};

SynthData make_synthetic(const SynthSpec& spec);

}  // namespace dualcl
