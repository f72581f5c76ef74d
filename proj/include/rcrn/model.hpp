// Copyright 2026 The rcrn Authors
// SPDX-License-Identifier: Apache-2.0
//
// Embedding + encoder + classification head as one unit, with the graph
// assembly for a batch: gather token rows, encode, pool, classify. Parameter
// names are stable ("embed.table", "enc.*", "head.*") and shared by the
// optimizer and the checkpoint format.

#pragma once

#include <memory>
#include <string>
#include <vector>

#include "rcrn/cells.hpp"
#include "rcrn/data.hpp"
#include "rcrn/embedding.hpp"
#include "rcrn/encoder.hpp"
#include "rcrn/errors.hpp"
#include "rcrn/graph.hpp"
#include "rcrn/head.hpp"
#include "rcrn/scan.hpp"

namespace rcrn {

template <typename T>
struct Model {
  EncoderConfig enc;
  std::size_t head_hidden = 200;
  std::size_t class_count = 0;
  EmbeddingTable<T> embedding;
  EncoderParams<T> encoder;
  HeadParams<T> head;
};

// Every parameter, in checkpoint order. Includes frozen embeddings.
template <typename M, typename F>
void visit_model_params(M& m, F&& f) {
  f(std::string("embed.table"), m.embedding.table);
  visit_encoder_params(m.encoder, "enc", f);
  visit_head_params(m.head, "head", f);
}

// Only what the optimizer may touch.
template <typename M, typename F>
void visit_trainable_params(M& m, F&& f) {
  if (m.embedding.trainable) f(std::string("embed.table"), m.embedding.table);
  visit_encoder_params(m.encoder, "enc", f);
  visit_head_params(m.head, "head", f);
}

namespace detail {

inline void check_model_dims(std::size_t class_count, std::size_t head_hidden) {
  if (class_count < 2) throw ConfigError("model: need at least 2 classes");
  if (head_hidden == 0) throw ConfigError("model: head_hidden must be >= 1");
}

}  // namespace detail

// Fresh model with a trainable random embedding. enc.input_dim is the
// embedding width; enc.seed drives every draw.
template <typename T>
Model<T> init_model(const EncoderConfig& enc, std::size_t vocab_size,
                    std::size_t class_count, std::size_t head_hidden = 200) {
  validate_config(enc);
  detail::check_model_dims(class_count, head_hidden);
  Model<T> m;
  m.enc = enc;
  m.head_hidden = head_hidden;
  m.class_count = class_count;
  std::mt19937_64 rng(enc.seed);
  m.embedding = init_embedding<T>(vocab_size, enc.input_dim, rng);
  m.encoder = init_encoder<T>(enc, InitScheme::glorot_uniform, rng);
  m.head = init_head<T>(6 * enc.hidden_dim, head_hidden, class_count, rng);
  return m;
}

// Same, but adopting an existing (typically frozen, file-loaded) embedding.
template <typename T>
Model<T> init_model(const EncoderConfig& enc, EmbeddingTable<T> embedding,
                    std::size_t class_count, std::size_t head_hidden = 200) {
  validate_config(enc);
  detail::check_model_dims(class_count, head_hidden);
  if (embedding.dim() != enc.input_dim)
    throw ConfigError("model: embedding dim " + std::to_string(embedding.dim()) +
                      " does not match encoder input_dim " +
                      std::to_string(enc.input_dim));
  Model<T> m;
  m.enc = enc;
  m.head_hidden = head_hidden;
  m.class_count = class_count;
  std::mt19937_64 rng(enc.seed);
  m.embedding = std::move(embedding);
  m.encoder = init_encoder<T>(enc, InitScheme::glorot_uniform, rng);
  m.head = init_head<T>(6 * enc.hidden_dim, head_hidden, class_count, rng);
  return m;
}

// Builds the forward graph for one batch up to the class logits [B x C].
// With trainable=true, parameters become named leaves so backward() can
// reach them; with trainable=false everything binds as plain inputs.
template <typename T>
Var<T> model_logits(Graph<T>& g, const Model<T>& m, const Batch& batch,
                    ScanExec exec = {}, bool trainable = true) {
  if (m.embedding.dim() != m.enc.input_dim)
    throw ContractError("model: embedding/encoder width mismatch");
  Var<T> table = (trainable && m.embedding.trainable)
                     ? g.param("embed.table", m.embedding.table)
                     : g.input(m.embedding.table);
  std::vector<Var<T>> x;
  x.reserve(batch.steps);
  for (std::size_t t = 0; t < batch.steps; ++t) {
    auto col = std::make_shared<std::vector<int>>(batch.batch);
    for (std::size_t b = 0; b < batch.batch; ++b)
      (*col)[b] = batch.ids[b * batch.steps + t];
    x.push_back(gather_rows(table, std::move(col)));
  }
  EncoderVars<T> vars = bind_encoder(g, m.encoder, "enc", trainable);
  Var<T> states = encode_graph(g, m.enc, vars, x, batch.mask, exec);
  auto lens =
      std::make_shared<const std::vector<std::size_t>>(batch.mask.lengths);
  Var<T> pooled = masked_pool(states, std::move(lens));
  HeadVars<T> hv = bind_head(g, m.head, "head", trainable);
  return head_logits(hv, pooled);
}

// Mean cross-entropy over the batch as a scalar node.
template <typename T>
Var<T> model_loss(Graph<T>& g, const Model<T>& m, const Batch& batch,
                  ScanExec exec = {}) {
  Var<T> logits = model_logits(g, m, batch, exec, true);
  auto labels = std::make_shared<const std::vector<int>>(batch.labels);
  return cross_entropy_logits(logits, std::move(labels));
}

// Argmax predictions; ties break toward the lower class id.
template <typename T>
std::vector<int> model_predict(const Model<T>& m, const Batch& batch,
                               ScanExec exec = {}) {
  Graph<T> g(false);
  const Tensor<T>& L = model_logits(g, m, batch, exec, false).value();
  std::vector<int> out(batch.batch);
  for (std::size_t b = 0; b < batch.batch; ++b) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < L.extent(1); ++c)
      if (L.at2(b, c) > L.at2(b, best)) best = c;
    out[b] = static_cast<int>(best);
  }
  return out;
}

}  // namespace rcrn
