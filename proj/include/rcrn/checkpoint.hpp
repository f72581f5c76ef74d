// Copyright 2026 The rcrn Authors
// SPDX-License-Identifier: Apache-2.0
//
// Bit-exact model persistence. File layout, all integers little-endian:
//
//   "RCRN"                      4-byte magic
//   u32 version                 currently 1
//   u32 entry count
//   entry*:
//     u16 name length, UTF-8 name bytes
//     u8 rank
//     u64 extent per dimension
//     payload
//
// Tensor entries carry row-major IEEE-754 binary32 scalars (one u32 each),
// regardless of the training precision. The first three entries are text
// ("__config__", "__vocab__", "__labels__"), rank 1 with the byte count as
// their extent and the raw UTF-8 bytes as payload. Parameter entries follow
// in visit_model_params order.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rcrn/config.hpp"
#include "rcrn/data.hpp"
#include "rcrn/errors.hpp"
#include "rcrn/model.hpp"

namespace rcrn {

namespace detail {

struct RawEntry {
  std::string name;
  bool is_text = false;
  std::vector<std::uint64_t> extents;
  std::vector<float> scalars;  // tensor entries
  std::string text;            // text entries
};

void write_entries(const std::string& path, const std::vector<RawEntry>& es);
std::vector<RawEntry> read_entries(const std::string& path);

std::string join_lines(const std::vector<std::string>& parts);
std::vector<std::string> split_lines(const std::string& text);

}  // namespace detail

template <typename T>
struct LoadedCheckpoint {
  Model<T> model;
  Vocab vocab;
  LabelMap labels;
};

template <typename T>
void save_checkpoint(const Model<T>& m, const Vocab& vocab,
                     const LabelMap& labels, const std::string& path) {
  std::vector<detail::RawEntry> es;
  {
    std::map<std::string, std::string> kv;
    kv["atom"] = to_string(m.enc.atom);
    kv["class_count"] = std::to_string(m.class_count);
    kv["embed_dim"] = std::to_string(m.enc.input_dim);
    kv["embed_trainable"] = m.embedding.trainable ? "1" : "0";
    kv["encoder_kind"] = to_string(m.enc.kind);
    kv["head_hidden"] = std::to_string(m.head_hidden);
    kv["hidden_dim"] = std::to_string(m.enc.hidden_dim);
    kv["layers"] = std::to_string(m.enc.layers);
    kv["output_gate_mode"] = to_string(m.enc.output_gate);
    kv["seed"] = std::to_string(m.enc.seed);
    kv["vocab_size"] = std::to_string(vocab.size());
    detail::RawEntry e;
    e.name = "__config__";
    e.is_text = true;
    e.text = detail::serialize_kv_lines(kv);
    es.push_back(std::move(e));
  }
  {
    detail::RawEntry e;
    e.name = "__vocab__";
    e.is_text = true;
    std::vector<std::string> toks(vocab.tokens().begin() + 2,
                                  vocab.tokens().end());
    e.text = detail::join_lines(toks);
    es.push_back(std::move(e));
  }
  {
    detail::RawEntry e;
    e.name = "__labels__";
    e.is_text = true;
    e.text = detail::join_lines(labels.names());
    es.push_back(std::move(e));
  }
  visit_model_params(m, [&](const std::string& name, const Tensor<T>& t) {
    detail::RawEntry e;
    e.name = name;
    e.extents.assign(t.shape().begin(), t.shape().end());
    e.scalars.resize(t.size());
    const T* p = t.data();
    for (std::size_t i = 0; i < t.size(); ++i)
      e.scalars[i] = static_cast<float>(p[i]);
    es.push_back(std::move(e));
  });
  detail::write_entries(path, es);
}

template <typename T>
LoadedCheckpoint<T> load_checkpoint(const std::string& path) {
  std::vector<detail::RawEntry> es = detail::read_entries(path);
  if (es.size() < 3 || es[0].name != "__config__" || !es[0].is_text ||
      es[1].name != "__vocab__" || !es[1].is_text ||
      es[2].name != "__labels__" || !es[2].is_text)
    throw DataError("checkpoint: missing leading text entries");

  std::map<std::string, std::string> kv = detail::parse_kv_lines(es[0].text);
  auto need = [&](const char* k) -> const std::string& {
    auto it = kv.find(k);
    if (it == kv.end())
      throw DataError(std::string("checkpoint: config lacks ") + k);
    return it->second;
  };
  EncoderConfig enc;
  enc.atom = parse_atom_kind(need("atom"));
  enc.kind = parse_encoder_kind(need("encoder_kind"));
  enc.output_gate = parse_output_gate_mode(need("output_gate_mode"));
  enc.input_dim = static_cast<std::size_t>(std::stoull(need("embed_dim")));
  enc.hidden_dim = static_cast<std::size_t>(std::stoull(need("hidden_dim")));
  enc.layers = static_cast<std::size_t>(std::stoull(need("layers")));
  enc.seed = std::stoull(need("seed"));
  std::size_t class_count =
      static_cast<std::size_t>(std::stoull(need("class_count")));
  std::size_t head_hidden =
      static_cast<std::size_t>(std::stoull(need("head_hidden")));
  std::size_t vocab_size =
      static_cast<std::size_t>(std::stoull(need("vocab_size")));
  bool embed_trainable = need("embed_trainable") == "1";

  LoadedCheckpoint<T> out;
  for (const std::string& tok : detail::split_lines(es[1].text))
    out.vocab.add(tok);
  if (out.vocab.size() != vocab_size)
    throw DataError("checkpoint: vocab entry has " +
                    std::to_string(out.vocab.size()) + " tokens, config says " +
                    std::to_string(vocab_size));
  for (const std::string& name : detail::split_lines(es[2].text))
    out.labels.add(name);
  if (out.labels.size() != class_count)
    throw DataError("checkpoint: label entry disagrees with class_count");

  out.model = init_model<T>(enc, vocab_size, class_count, head_hidden);
  out.model.embedding.trainable = embed_trainable;

  std::size_t next = 3;
  visit_model_params(out.model, [&](const std::string& name, Tensor<T>& t) {
    if (next >= es.size())
      throw DataError("checkpoint: missing entry for " + name);
    const detail::RawEntry& e = es[next++];
    if (e.name != name)
      throw DataError("checkpoint: expected entry " + name + ", found " +
                      e.name);
    Shape sh(e.extents.begin(), e.extents.end());
    if (sh != t.shape())
      throw DataError("checkpoint: entry " + name + " has shape " +
                      shape_str(sh) + ", expected " + shape_str(t.shape()));
    T* p = t.unshared_data();
    for (std::size_t i = 0; i < e.scalars.size(); ++i)
      p[i] = static_cast<T>(e.scalars[i]);
  });
  if (next != es.size())
    throw DataError("checkpoint: " + std::to_string(es.size() - next) +
                    " unexpected trailing entries");
  return out;
}

}  // namespace rcrn
