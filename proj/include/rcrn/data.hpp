// Copyright 2026 The rcrn Authors
// SPDX-License-Identifier: Apache-2.0
//
// Corpus ingestion and batching. The TSV format is one example per line,
// `label<TAB>space-tokenized text`, UTF-8. Tokenization is whitespace-only
// and case-preserving; labels map to dense ids by first appearance.

#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "rcrn/embedding.hpp"
#include "rcrn/encoder.hpp"
#include "rcrn/errors.hpp"

namespace rcrn {

// Token table with two reserved rows: id 0 pads, id 1 stands in for tokens
// never seen at vocabulary-build time.
class Vocab {
 public:
  static constexpr int pad_id = 0;
  static constexpr int unk_id = 1;

  Vocab() : tokens_{"<pad>", "<unk>"} {
    ids_.emplace(tokens_[0], 0);
    ids_.emplace(tokens_[1], 1);
  }

  int add(const std::string& token);           // inserts if absent
  int lookup(const std::string& token) const;  // unk_id if absent
  bool contains(const std::string& token) const {
    return ids_.count(token) != 0;
  }
  const std::string& token(std::size_t id) const { return tokens_.at(id); }
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  std::unordered_map<std::string, int> ids_;
  std::vector<std::string> tokens_;
};

// Dense label-name table; id equals first-appearance order.
class LabelMap {
 public:
  int add(const std::string& name);
  int id_of(const std::string& name) const;  // -1 if absent
  const std::string& name(std::size_t id) const { return names_.at(id); }
  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }

 private:
  std::unordered_map<std::string, int> ids_;
  std::vector<std::string> names_;
};

struct Example {
  int label = 0;
  std::vector<int> tokens;  // non-empty
};

struct Dataset {
  std::vector<Example> examples;
  std::size_t class_count = 0;
  std::size_t max_len = 0;

  std::size_t size() const { return examples.size(); }
};

// Reads a TSV corpus. With grow=true new tokens and labels extend the
// tables; with grow=false unknown tokens map to unk and an unseen label is a
// data error (the dev/eval path). class_count always reflects the full label
// table so train and dev agree.
Dataset load_tsv(const std::string& path, Vocab& vocab, LabelMap& labels,
                 bool grow);

// Inverse of load_tsv for datasets whose ids came from `vocab`/`labels`.
void serialize_tsv(const Dataset& data, const Vocab& vocab,
                   const LabelMap& labels, const std::string& path);

// One padded minibatch. ids is row-major [batch x steps] with pad id 0 past
// each true length.
struct Batch {
  std::size_t batch = 0;
  std::size_t steps = 0;
  std::vector<int> ids;
  BatchMask mask;
  std::vector<int> labels;
};

// Splits the dataset into consecutive batches after an optional seeded
// shuffle. Every example appears exactly once; the final batch may be short.
std::vector<Batch> batch_pad(const Dataset& data, std::size_t batch_size,
                             std::optional<std::uint64_t> shuffle_seed);

// ---------------------------------------------------------------------------
// Word vectors
// ---------------------------------------------------------------------------

// Parsed word-vector file: `token v1 v2 ... vE` per line, constant E.
struct WordVecFile {
  std::size_t dim = 0;
  std::unordered_map<std::string, std::vector<float>> rows;
};

WordVecFile parse_word_vectors(const std::string& path);

// Builds a frozen table over `vocab`: file rows where available, seeded
// Glorot noise for the rest, zeros for pad.
template <typename T>
EmbeddingTable<T> load_word_vectors(const std::string& path, const Vocab& vocab,
                                    std::uint64_t seed = 1) {
  WordVecFile f = parse_word_vectors(path);
  std::mt19937_64 rng(seed);
  EmbeddingTable<T> emb = init_embedding<T>(vocab.size(), f.dim, rng);
  T* p = emb.table.unshared_data();
  for (std::size_t id = 1; id < vocab.size(); ++id) {
    auto it = f.rows.find(vocab.token(id));
    if (it == f.rows.end()) continue;
    for (std::size_t e = 0; e < f.dim; ++e)
      p[id * f.dim + e] = static_cast<T>(it->second[e]);
  }
  emb.trainable = false;
  return emb;
}

// ---------------------------------------------------------------------------
// Synthetic tasks
// ---------------------------------------------------------------------------

struct SynthTask {
  Dataset train, test;
  Vocab vocab;
  LabelMap labels;
};

// Sequences of length T whose first token is drawn from {2, 3} and decides
// the label (2 -> 0, 3 -> 1); the remaining T-1 tokens are uniform
// distractors from [4, vocab_size), or from [2, vocab_size) when that range
// is empty. Train and test come from disjoint stretches of one seed stream.
SynthTask gen_first_token_task(std::size_t n_train, std::size_t n_test,
                               std::size_t steps, std::size_t vocab_size,
                               std::uint64_t seed);

// n distinct uniform-random sequences with independent fair-coin labels;
// pure memorization, used to probe model capacity. test == train.
SynthTask gen_random_label_task(std::size_t n, std::size_t steps,
                                std::size_t vocab_size, std::uint64_t seed);

}  // namespace rcrn
