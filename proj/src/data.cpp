// Copyright 2026 The rcrn Authors
// SPDX-License-Identifier: Apache-2.0

#include "rcrn/data.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

namespace rcrn {

int Vocab::add(const std::string& token) {
  auto it = ids_.find(token);
  if (it != ids_.end()) return it->second;
  int id = static_cast<int>(tokens_.size());
  ids_.emplace(token, id);
  tokens_.push_back(token);
  return id;
}

int Vocab::lookup(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? unk_id : it->second;
}

int LabelMap::add(const std::string& name) {
  auto it = ids_.find(name);
  if (it != ids_.end()) return it->second;
  int id = static_cast<int>(names_.size());
  ids_.emplace(name, id);
  names_.push_back(name);
  return id;
}

int LabelMap::id_of(const std::string& name) const {
  auto it = ids_.find(name);
  return it == ids_.end() ? -1 : it->second;
}

namespace {

std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
    std::size_t j = i;
    while (j < s.size() && s[j] != ' ' && s[j] != '\t') ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

std::string strip_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

}  // namespace

Dataset load_tsv(const std::string& path, Vocab& vocab, LabelMap& labels,
                 bool grow) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open dataset file: " + path);
  Dataset out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = strip_cr(line);
    std::size_t tab = line.find('\t');
    if (tab == std::string::npos || tab == 0)
      throw DataError(path + ":" + std::to_string(lineno) +
                      ": expected label<TAB>text");
    std::string label = line.substr(0, tab);
    std::vector<std::string> toks = split_ws(line.substr(tab + 1));
    if (toks.empty())
      throw DataError(path + ":" + std::to_string(lineno) + ": empty text");
    Example ex;
    if (grow) {
      ex.label = labels.add(label);
    } else {
      ex.label = labels.id_of(label);
      if (ex.label < 0)
        throw DataError(path + ":" + std::to_string(lineno) +
                        ": unknown label '" + label + "'");
    }
    ex.tokens.reserve(toks.size());
    for (const std::string& t : toks)
      ex.tokens.push_back(grow ? vocab.add(t) : vocab.lookup(t));
    out.max_len = std::max(out.max_len, ex.tokens.size());
    out.examples.push_back(std::move(ex));
  }
  out.class_count = labels.size();
  return out;
}

void serialize_tsv(const Dataset& data, const Vocab& vocab,
                   const LabelMap& labels, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write dataset file: " + path);
  for (const Example& ex : data.examples) {
    out << labels.name(static_cast<std::size_t>(ex.label)) << '\t';
    for (std::size_t i = 0; i < ex.tokens.size(); ++i) {
      if (i) out << ' ';
      out << vocab.token(static_cast<std::size_t>(ex.tokens[i]));
    }
    out << '\n';
  }
  if (!out) throw DataError("write failed: " + path);
}

std::vector<Batch> batch_pad(const Dataset& data, std::size_t batch_size,
                             std::optional<std::uint64_t> shuffle_seed) {
  if (batch_size == 0) throw ContractError("batch_pad: batch_size must be >= 1");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  if (shuffle_seed) {
    std::mt19937_64 rng(*shuffle_seed);
    std::shuffle(order.begin(), order.end(), rng);
  }
  std::vector<Batch> out;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    std::size_t B = std::min(batch_size, order.size() - start);
    Batch b;
    b.batch = B;
    std::vector<std::size_t> lens(B);
    for (std::size_t i = 0; i < B; ++i) {
      const Example& ex = data.examples[order[start + i]];
      lens[i] = ex.tokens.size();
      b.steps = std::max(b.steps, ex.tokens.size());
    }
    b.ids.assign(B * b.steps, Vocab::pad_id);
    b.labels.resize(B);
    for (std::size_t i = 0; i < B; ++i) {
      const Example& ex = data.examples[order[start + i]];
      std::copy(ex.tokens.begin(), ex.tokens.end(),
                b.ids.begin() + static_cast<std::ptrdiff_t>(i * b.steps));
      b.labels[i] = ex.label;
    }
    b.mask = BatchMask::from_lengths(lens, b.steps);
    out.push_back(std::move(b));
  }
  return out;
}

WordVecFile parse_word_vectors(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open word-vector file: " + path);
  WordVecFile f;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = strip_cr(line);
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string token;
    ss >> token;
    std::vector<float> vals;
    float v;
    while (ss >> v) vals.push_back(v);
    if (!ss.eof())
      throw DataError(path + ":" + std::to_string(lineno) +
                      ": non-numeric vector component");
    if (vals.empty())
      throw DataError(path + ":" + std::to_string(lineno) + ": no components");
    if (f.dim == 0) f.dim = vals.size();
    if (vals.size() != f.dim)
      throw DataError(path + ":" + std::to_string(lineno) + ": expected " +
                      std::to_string(f.dim) + " components, got " +
                      std::to_string(vals.size()));
    f.rows[token] = std::move(vals);
  }
  if (f.dim == 0) throw DataError("word-vector file is empty: " + path);
  return f;
}

namespace {

void add_synth_vocab(Vocab& v, std::size_t vocab_size) {
  for (std::size_t id = 2; id < vocab_size; ++id)
    v.add("w" + std::to_string(id));
}

}  // namespace

SynthTask gen_first_token_task(std::size_t n_train, std::size_t n_test,
                               std::size_t steps, std::size_t vocab_size,
                               std::uint64_t seed) {
  if (vocab_size < 4 || steps < 2)
    throw ContractError("gen_first_token_task: need vocab_size >= 4, T >= 2");
  SynthTask task;
  add_synth_vocab(task.vocab, vocab_size);
  task.labels.add("a");
  task.labels.add("b");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> cls(2, 3);
  int dlo = vocab_size > 4 ? 4 : 2;
  std::uniform_int_distribution<int> dis(dlo, static_cast<int>(vocab_size) - 1);
  auto gen = [&](std::size_t n, Dataset& out) {
    for (std::size_t i = 0; i < n; ++i) {
      Example ex;
      ex.tokens.resize(steps);
      ex.tokens[0] = cls(rng);
      ex.label = ex.tokens[0] == 2 ? 0 : 1;
      for (std::size_t t = 1; t < steps; ++t) ex.tokens[t] = dis(rng);
      out.examples.push_back(std::move(ex));
    }
    out.class_count = 2;
    out.max_len = n ? steps : 0;
  };
  gen(n_train, task.train);
  gen(n_test, task.test);
  return task;
}

SynthTask gen_random_label_task(std::size_t n, std::size_t steps,
                                std::size_t vocab_size, std::uint64_t seed) {
  if (vocab_size < 3 || steps == 0)
    throw ContractError("gen_random_label_task: need vocab_size >= 3, T >= 1");
  SynthTask task;
  add_synth_vocab(task.vocab, vocab_size);
  task.labels.add("a");
  task.labels.add("b");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> tok(2, static_cast<int>(vocab_size) - 1);
  std::uniform_int_distribution<int> lab(0, 1);
  std::set<std::vector<int>> seen;
  while (task.train.size() < n) {
    std::vector<int> toks(steps);
    for (std::size_t t = 0; t < steps; ++t) toks[t] = tok(rng);
    if (!seen.insert(toks).second) continue;
    Example ex;
    ex.tokens = std::move(toks);
    ex.label = lab(rng);
    task.train.examples.push_back(std::move(ex));
  }
  task.train.class_count = 2;
  task.train.max_len = steps;
  task.test = task.train;
  return task;
}

}  // namespace rcrn
