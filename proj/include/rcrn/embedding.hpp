// Copyright 2026 The rcrn Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>

#include "rcrn/errors.hpp"
#include "rcrn/tensor.hpp"

namespace rcrn {

// Token embedding matrix, [vocab x embed_dim]. Row 0 is the pad row and is
// all zeros; it stays zero through training because padded positions are
// mask-gated out of every gradient path. Tables read from a word-vector file
// are frozen; randomly initialized ones are trainable.
template <typename T>
struct EmbeddingTable {
  Tensor<T> table;
  bool trainable = true;

  std::size_t vocab_size() const { return table.extent(0); }
  std::size_t dim() const { return table.extent(1); }
};

template <typename T>
EmbeddingTable<T> init_embedding(std::size_t vocab, std::size_t dim,
                                 std::mt19937_64& rng) {
  if (vocab < 2 || dim == 0)
    throw ContractError("init_embedding: need vocab >= 2 (pad+unk) and dim >= 1");
  T bound = static_cast<T>(std::sqrt(6.0 / static_cast<double>(vocab + dim)));
  Tensor<T> t = Tensor<T>::uniform({vocab, dim}, -bound, bound, rng);
  T* p = t.unshared_data();
  for (std::size_t e = 0; e < dim; ++e) p[e] = T(0);
  return {std::move(t), true};
}

}  // namespace rcrn
