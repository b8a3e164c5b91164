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

#include "dualcl/text.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>

#include "dualcl/rng.hpp"

namespace dualcl {

namespace {

// Locale-independent ASCII classification.
bool is_space(unsigned char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
}

bool is_ascii_punct(unsigned char c) {
  return (c >= 33 && c <= 47) || (c >= 58 && c <= 64) || (c >= 91 && c <= 96) ||
         (c >= 123 && c <= 126);
}

char to_lower_ascii(unsigned char c) {
  return (c >= 'A' && c <= 'Z') ? static_cast<char>(c + 32) : static_cast<char>(c);
}

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && is_space(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && is_space(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

[[noreturn]] void line_error(const std::string& path, std::int64_t line,
                             const std::string& msg) {
  throw std::invalid_argument(path + " line " + std::to_string(line) + ": " + msg);
}

}  // namespace

std::int64_t find_invalid_utf8(const std::string& s) {
  const auto* p = reinterpret_cast<const unsigned char*>(s.data());
  const std::int64_t n = static_cast<std::int64_t>(s.size());
  std::int64_t i = 0;
  while (i < n) {
    const unsigned char c = p[i];
    if (c < 0x80) {
      ++i;
      continue;
    }
    std::int64_t len;
    std::uint32_t cp;
    if ((c & 0xE0) == 0xC0) {
      len = 2;
      cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
      len = 3;
      cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
      len = 4;
      cp = c & 0x07;
    } else {
      return i;  // stray continuation byte or invalid lead
    }
    if (i + len > n) return i;
    for (std::int64_t j = 1; j < len; ++j) {
      if ((p[i + j] & 0xC0) != 0x80) return i;
      cp = (cp << 6) | (p[i + j] & 0x3F);
    }
    const bool overlong = (len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) ||
                          (len == 4 && cp < 0x10000);
    const bool surrogate = cp >= 0xD800 && cp <= 0xDFFF;
    if (overlong || surrogate || cp > 0x10FFFF) return i;
    i += len;
  }
  return -1;
}

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  const auto flush = [&] {
    if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
  };
  for (const char raw : text) {
    const auto c = static_cast<unsigned char>(raw);
    if (c < 0x80 && is_space(c)) {
      flush();
    } else if (c < 0x80 && is_ascii_punct(c)) {
      flush();
      out.emplace_back(1, static_cast<char>(c));
    } else {
      cur.push_back(to_lower_ascii(c));
    }
  }
  flush();
  return out;
}

Dataset load_tsv(const std::string& path, int num_classes) {
  if (num_classes < 2) {
    throw std::invalid_argument("load_tsv: num_classes must be at least 2");
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("load_tsv: cannot open " + path);
  }
  Dataset ds;
  ds.num_classes = num_classes;
  std::string line;
  std::int64_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (const auto bad = find_invalid_utf8(line); bad >= 0) {
      line_error(path, lineno, "invalid UTF-8 at byte " + std::to_string(bad));
    }
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      line_error(path, lineno, "missing tab separator");
    }
    const std::string label_str = line.substr(0, tab);
    int label = 0;
    try {
      std::size_t used = 0;
      label = std::stoi(label_str, &used);
      if (used != label_str.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      line_error(path, lineno, "label '" + label_str + "' is not an integer");
    }
    if (label < 0 || label >= num_classes) {
      line_error(path, lineno,
                 "label " + std::to_string(label) + " out of range [0, " +
                     std::to_string(num_classes) + ")");
    }
    const std::string text = trim(line.substr(tab + 1));
    if (text.empty()) {
      line_error(path, lineno, "empty text");
    }
    ds.examples.push_back({text, label});
  }
  if (ds.examples.empty()) {
    throw std::invalid_argument("load_tsv: " + path + " holds no examples");
  }
  return ds;
}

void write_tsv(const std::string& path, const Dataset& ds) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("write_tsv: cannot open " + path);
  }
  for (const auto& ex : ds.examples) {
    if (ex.text.find('\t') != std::string::npos ||
        ex.text.find('\n') != std::string::npos) {
      throw std::invalid_argument("write_tsv: text contains a tab or newline");
    }
    out << ex.label << '\t' << ex.text << '\n';
  }
  if (!out) {
    throw std::runtime_error("write_tsv: write failed for " + path);
  }
}

Vocabulary build_vocab(const Dataset& ds, const std::vector<std::string>& label_names,
                       std::int64_t min_freq, std::int64_t max_size) {
  if (label_names.size() < 2) {
    throw std::invalid_argument("build_vocab: need at least 2 label names");
  }
  if (ds.num_classes != static_cast<int>(label_names.size())) {
    throw std::invalid_argument("build_vocab: dataset declares " +
                                std::to_string(ds.num_classes) + " classes but " +
                                std::to_string(label_names.size()) +
                                " label names were given");
  }
  if (min_freq < 1) {
    throw std::invalid_argument("build_vocab: min_freq must be at least 1");
  }

  Vocabulary v;
  v.id_to_token = {"[PAD]", "[UNK]", "[CLS]", "[SEP]"};
  for (std::int64_t i = 0; i < v.size(); ++i) v.token_to_id[v.id_to_token[i]] = i;

  const auto intern = [&](const std::string& tok) {
    const auto it = v.token_to_id.find(tok);
    if (it != v.token_to_id.end()) return it->second;
    const std::int64_t id = v.size();
    v.id_to_token.push_back(tok);
    v.token_to_id[tok] = id;
    return id;
  };

  v.label_names = label_names;
  std::vector<std::vector<std::string>> label_tokens;
  for (const auto& name : label_names) {
    const auto toks = tokenize(name);
    if (toks.empty()) {
      throw std::invalid_argument("build_vocab: label name '" + name +
                                  "' has no tokens");
    }
    for (const auto& prev : label_tokens) {
      if (prev == toks) {
        throw std::invalid_argument(
            "build_vocab: label names must be distinct after tokenization ('" + name +
            "')");
      }
    }
    label_tokens.push_back(toks);
    std::vector<std::int64_t> ids;
    ids.reserve(toks.size());
    for (const auto& t : toks) ids.push_back(intern(t));
    v.label_token_ids.push_back(std::move(ids));
  }

  if (max_size < v.size()) {
    throw std::invalid_argument("build_vocab: max_size " + std::to_string(max_size) +
                                " is smaller than the " + std::to_string(v.size()) +
                                " special and label tokens");
  }

  // Corpus tokens by descending frequency, ties lexicographic ascending.
  std::unordered_map<std::string, std::int64_t> freq;
  for (const auto& ex : ds.examples) {
    for (const auto& tok : tokenize(ex.text)) ++freq[tok];
  }
  std::vector<std::pair<std::string, std::int64_t>> ranked;
  ranked.reserve(freq.size());
  for (const auto& [tok, f] : freq) {
    if (f >= min_freq && v.token_to_id.find(tok) == v.token_to_id.end()) {
      ranked.emplace_back(tok, f);
    }
  }
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  for (const auto& [tok, f] : ranked) {
    if (v.size() >= max_size) break;
    (void)f;
    (void)intern(tok);
  }
  return v;
}

std::vector<std::int64_t> encode_text(const Vocabulary& vocab, const std::string& text) {
  std::vector<std::int64_t> ids;
  for (const auto& tok : tokenize(text)) {
    const auto it = vocab.token_to_id.find(tok);
    ids.push_back(it == vocab.token_to_id.end() ? Vocabulary::kUnk : it->second);
  }
  return ids;
}

EncodedSequence build_augmented_sequence(const Vocabulary& vocab, const std::string& text,
                                         const std::vector<int>& label_order,
                                         std::int64_t max_len) {
  const int k = vocab.num_classes();
  if (k < 2) {
    throw std::invalid_argument("build_augmented_sequence: vocabulary has no labels");
  }
  if (static_cast<int>(label_order.size()) != k) {
    throw std::invalid_argument("build_augmented_sequence: label_order size " +
                                std::to_string(label_order.size()) + " != " +
                                std::to_string(k) + " classes");
  }
  std::vector<bool> seen(static_cast<std::size_t>(k), false);
  for (const int c : label_order) {
    if (c < 0 || c >= k || seen[static_cast<std::size_t>(c)]) {
      throw std::invalid_argument(
          "build_augmented_sequence: label_order is not a permutation");
    }
    seen[static_cast<std::size_t>(c)] = true;
  }

  EncodedSequence seq;
  seq.augmented = true;
  seq.label_positions.resize(static_cast<std::size_t>(k));
  seq.ids.push_back(Vocabulary::kCls);
  for (const int c : label_order) {
    for (const std::int64_t tid : vocab.label_token_ids[static_cast<std::size_t>(c)]) {
      seq.label_positions[static_cast<std::size_t>(c)].push_back(
          static_cast<std::int64_t>(seq.ids.size()));
      seq.ids.push_back(tid);
    }
  }
  seq.ids.push_back(Vocabulary::kSep);

  const std::int64_t fixed = static_cast<std::int64_t>(seq.ids.size()) + 1;  // + final [SEP]
  if (fixed + 1 > max_len) {
    throw std::invalid_argument(
        "build_augmented_sequence: max_len " + std::to_string(max_len) +
        " leaves no room for text after the label block (needs at least " +
        std::to_string(fixed + 1) + ")");
  }
  auto words = encode_text(vocab, text);
  const auto budget = static_cast<std::size_t>(max_len - fixed);
  if (words.size() > budget) words.resize(budget);
  seq.ids.insert(seq.ids.end(), words.begin(), words.end());
  seq.ids.push_back(Vocabulary::kSep);
  return seq;
}

EncodedSequence build_plain_sequence(const Vocabulary& vocab, const std::string& text,
                                     std::int64_t max_len) {
  if (max_len < 3) {
    throw std::invalid_argument("build_plain_sequence: max_len must be at least 3");
  }
  EncodedSequence seq;
  seq.augmented = false;
  seq.ids.push_back(Vocabulary::kCls);
  auto words = encode_text(vocab, text);
  const auto budget = static_cast<std::size_t>(max_len - 2);
  if (words.size() > budget) words.resize(budget);
  seq.ids.insert(seq.ids.end(), words.begin(), words.end());
  seq.ids.push_back(Vocabulary::kSep);
  return seq;
}

Batch collate_batch(const std::vector<EncodedSequence>& seqs, const std::vector<int>& labels) {
  if (seqs.empty()) {
    throw std::invalid_argument("collate_batch: empty batch");
  }
  if (seqs.size() != labels.size()) {
    throw std::invalid_argument("collate_batch: " + std::to_string(seqs.size()) +
                                " sequences but " + std::to_string(labels.size()) +
                                " labels");
  }
  Batch batch;
  batch.batch_size = static_cast<std::int64_t>(seqs.size());
  batch.augmented = seqs[0].augmented;
  batch.num_classes =
      batch.augmented ? static_cast<int>(seqs[0].label_positions.size()) : 0;
  for (const auto& s : seqs) {
    if (s.augmented != batch.augmented ||
        (batch.augmented &&
         static_cast<int>(s.label_positions.size()) != batch.num_classes)) {
      throw std::invalid_argument("collate_batch: mixed sequence kinds in one batch");
    }
    batch.seq_len = std::max(batch.seq_len, static_cast<std::int64_t>(s.ids.size()));
  }
  batch.labels = labels;
  batch.token_ids.assign(static_cast<std::size_t>(batch.batch_size * batch.seq_len),
                         Vocabulary::kPad);
  batch.pad_mask.assign(static_cast<std::size_t>(batch.batch_size * batch.seq_len), 0.0);
  for (std::int64_t b = 0; b < batch.batch_size; ++b) {
    const auto& ids = seqs[static_cast<std::size_t>(b)].ids;
    for (std::size_t t = 0; t < ids.size(); ++t) {
      batch.token_ids[static_cast<std::size_t>(b * batch.seq_len) + t] = ids[t];
      batch.pad_mask[static_cast<std::size_t>(b * batch.seq_len) + t] = 1.0;
    }
    if (batch.augmented) {
      batch.label_positions.push_back(seqs[static_cast<std::size_t>(b)].label_positions);
    }
  }
  return batch;
}

Dataset subsample_per_class(const Dataset& ds, std::int64_t n, std::uint64_t seed) {
  if (n < 1) {
    throw std::invalid_argument("subsample_per_class: n must be positive");
  }
  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(ds.num_classes));
  for (std::size_t i = 0; i < ds.examples.size(); ++i) {
    by_class[static_cast<std::size_t>(ds.examples[i].label)].push_back(i);
  }
  Dataset out;
  out.num_classes = ds.num_classes;
  Rng rng(seed);
  for (int c = 0; c < ds.num_classes; ++c) {
    auto& members = by_class[static_cast<std::size_t>(c)];
    if (static_cast<std::int64_t>(members.size()) < n) {
      throw std::invalid_argument("subsample_per_class: class " + std::to_string(c) +
                                  " has only " + std::to_string(members.size()) +
                                  " examples, need " + std::to_string(n));
    }
    rng.shuffle(members);
    for (std::int64_t i = 0; i < n; ++i) {
      out.examples.push_back(ds.examples[members[static_cast<std::size_t>(i)]]);
    }
  }
  return out;
}

SynthData make_synthetic(const SynthSpec& spec) {
  static const std::vector<std::string> kNames{"alpha", "beta",  "gamma", "delta",
                                               "epsilon", "zeta", "eta",   "theta"};
  if (spec.num_classes < 2 || spec.num_classes > static_cast<int>(kNames.size())) {
    throw std::invalid_argument("make_synthetic: num_classes must lie in [2, " +
                                std::to_string(kNames.size()) + "]");
  }
  if (spec.train_per_class < 1 || spec.test_per_class < 1 ||
      spec.keywords_per_class < 1 || spec.filler_vocab < 1) {
    throw std::invalid_argument("make_synthetic: counts must be positive");
  }
  if (spec.min_words < 1 || spec.max_words < spec.min_words) {
    throw std::invalid_argument("make_synthetic: need 1 <= min_words <= max_words");
  }
  if (!(spec.keyword_prob > 0.0 && spec.keyword_prob <= 1.0)) {
    throw std::invalid_argument("make_synthetic: keyword_prob must lie in (0, 1]");
  }

  SynthData data;
  data.label_names.assign(kNames.begin(), kNames.begin() + spec.num_classes);
  data.train.num_classes = spec.num_classes;
  data.test.num_classes = spec.num_classes;

  Rng rng(spec.seed);
  const auto make_example = [&](int cls) {
    const std::int64_t len =
        spec.min_words +
        static_cast<std::int64_t>(rng.next_below(
            static_cast<std::uint64_t>(spec.max_words - spec.min_words + 1)));
    std::vector<std::string> words;
    words.reserve(static_cast<std::size_t>(len));
    bool has_keyword = false;
    for (std::int64_t i = 0; i < len; ++i) {
      if (rng.next_double() < spec.keyword_prob) {
        const auto kw = rng.next_below(static_cast<std::uint64_t>(spec.keywords_per_class));
        words.push_back(data.label_names[static_cast<std::size_t>(cls)] + "term" +
                        std::to_string(kw));
        has_keyword = true;
      } else {
        const auto f = rng.next_below(static_cast<std::uint64_t>(spec.filler_vocab));
        words.push_back("filler" + std::to_string(f));
      }
    }
    if (!has_keyword) {
      const auto pos = rng.next_below(static_cast<std::uint64_t>(len));
      const auto kw = rng.next_below(static_cast<std::uint64_t>(spec.keywords_per_class));
      words[static_cast<std::size_t>(pos)] =
          data.label_names[static_cast<std::size_t>(cls)] + "term" + std::to_string(kw);
    }
    std::string text;
    for (std::size_t i = 0; i < words.size(); ++i) {
      if (i) text += ' ';
      text += words[i];
    }
    return Example{text, cls};
  };

  for (std::int64_t i = 0; i < spec.train_per_class; ++i) {
    for (int c = 0; c < spec.num_classes; ++c) {
      data.train.examples.push_back(make_example(c));
    }
  }
  for (std::int64_t i = 0; i < spec.test_per_class; ++i) {
    for (int c = 0; c < spec.num_classes; ++c) {
      data.test.examples.push_back(make_example(c));
    }
  }
  return data;
}

}  // namespace dualcl
