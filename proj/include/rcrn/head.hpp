// Copyright 2026 The rcrn Authors
// SPDX-License-Identifier: Apache-2.0
//
// Classification head: masked max/mean/min pooling over the encoder states,
// one dense ReLU layer, and a softmax classifier. Pooling ranges strictly
// over unmasked positions; the mean divides by each example's true length.

#pragma once

#include <cmath>
#include <limits>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "rcrn/encoder.hpp"
#include "rcrn/errors.hpp"
#include "rcrn/graph.hpp"
#include "rcrn/tensor.hpp"

namespace rcrn {

template <typename T>
struct HeadParams {
  Tensor<T> W1;  // [feat x hidden]
  Tensor<T> b1;  // [hidden]
  Tensor<T> W2;  // [hidden x classes]
  Tensor<T> b2;  // [classes]
};

template <typename T>
HeadParams<T> init_head(std::size_t feat_dim, std::size_t hidden,
                        std::size_t classes, std::mt19937_64& rng) {
  if (feat_dim == 0 || hidden == 0 || classes == 0)
    throw ContractError("init_head: dims must be positive");
  HeadParams<T> p;
  T b1v = static_cast<T>(std::sqrt(6.0 / static_cast<double>(feat_dim + hidden)));
  T b2v = static_cast<T>(std::sqrt(6.0 / static_cast<double>(hidden + classes)));
  p.W1 = Tensor<T>::uniform({feat_dim, hidden}, -b1v, b1v, rng);
  p.b1 = Tensor<T>::zeros({hidden});
  p.W2 = Tensor<T>::uniform({hidden, classes}, -b2v, b2v, rng);
  p.b2 = Tensor<T>::zeros({classes});
  return p;
}

template <typename HP, typename F>
void visit_head_params(HP& p, const std::string& prefix, F&& f) {
  f(prefix + ".W1", p.W1);
  f(prefix + ".b1", p.b1);
  f(prefix + ".W2", p.W2);
  f(prefix + ".b2", p.b2);
}

template <typename T>
struct HeadVars {
  Var<T> W1, b1, W2, b2;
};

template <typename T>
HeadVars<T> bind_head(Graph<T>& g, const HeadParams<T>& p, const std::string& prefix,
                 bool trainable = true) {
  auto leaf = [&](const std::string& n, const Tensor<T>& t) {
    return trainable ? g.param(n, t) : g.input(t);
  };
  return {leaf(prefix + ".W1", p.W1), leaf(prefix + ".b1", p.b1),
          leaf(prefix + ".W2", p.W2), leaf(prefix + ".b2", p.b2)};
}

// ---------------------------------------------------------------------------
// Masked pooling (graph op)
// ---------------------------------------------------------------------------

// states [B x T x F] -> [B x 3F] laid out [max | mean | min], pooling only
// over t < lengths[b]. Max/min gradients flow to the first attaining
// position; mean gradient is spread by 1/length.
template <typename T>
Var<T> masked_pool(Var<T> states,
                   std::shared_ptr<const std::vector<std::size_t>> lengths) {
  Graph<T>& g = *states.graph;
  return g.make_node(
      {states.id},
      [lengths](Graph<T>& g, const auto& p) {
        const Tensor<T>& S = g.value(p[0]);
        if (S.rank() != 3)
          throw DimError("masked_pool: expected [batch x steps x features], "
                         "got " + shape_str(S.shape()));
        std::size_t B = S.extent(0), Tn = S.extent(1), F = S.extent(2);
        if (lengths->size() != B)
          throw DimError("masked_pool: " + std::to_string(lengths->size()) +
                         " lengths for batch of " + std::to_string(B));
        Tensor<T> out({B, 3 * F});
        T* o = out.unshared_data();
        const T* s = S.data();
        for (std::size_t b = 0; b < B; ++b) {
          std::size_t len = (*lengths)[b];
          if (len == 0 || len > Tn)
            throw DataError("masked_pool: example " + std::to_string(b) +
                            " has invalid length " + std::to_string(len));
          for (std::size_t f = 0; f < F; ++f) {
            T mx = s[(b * Tn) * F + f], mn = mx, sum = mx;
            for (std::size_t t = 1; t < len; ++t) {
              T v = s[(b * Tn + t) * F + f];
              if (v > mx) mx = v;
              if (v < mn) mn = v;
              sum += v;
            }
            o[b * 3 * F + f] = mx;
            o[b * 3 * F + F + f] = sum / static_cast<T>(len);
            o[b * 3 * F + 2 * F + f] = mn;
          }
        }
        return out;
      },
      [lengths](Graph<T>& g, std::uint32_t self) {
        std::uint32_t pid = g.parents(self)[0];
        if (!g.needs_grad(pid)) return;
        const Tensor<T>& S = g.value(pid);
        const Tensor<T>& G = g.grad(self);
        std::size_t B = S.extent(0), Tn = S.extent(1), F = S.extent(2);
        const T* s = S.data();
        const T* gr = G.data();
        T* d = g.grad_buffer(pid).unshared_data();
        for (std::size_t b = 0; b < B; ++b) {
          std::size_t len = (*lengths)[b];
          for (std::size_t f = 0; f < F; ++f) {
            std::size_t tmax = 0, tmin = 0;
            T mx = s[(b * Tn) * F + f], mn = mx;
            for (std::size_t t = 1; t < len; ++t) {
              T v = s[(b * Tn + t) * F + f];
              if (v > mx) { mx = v; tmax = t; }
              if (v < mn) { mn = v; tmin = t; }
            }
            d[(b * Tn + tmax) * F + f] += gr[b * 3 * F + f];
            T gm = gr[b * 3 * F + F + f] / static_cast<T>(len);
            for (std::size_t t = 0; t < len; ++t) d[(b * Tn + t) * F + f] += gm;
            d[(b * Tn + tmin) * F + f] += gr[b * 3 * F + 2 * F + f];
          }
        }
      });
}

// Dense ReLU layer then linear classifier over pooled features.
template <typename T>
Var<T> head_logits(const HeadVars<T>& p, Var<T> pooled) {
  Var<T> hidden = relu(add_bias(matmul(pooled, p.W1), p.b1));
  return add_bias(matmul(hidden, p.W2), p.b2);
}

// ---------------------------------------------------------------------------
// Value-level surface
// ---------------------------------------------------------------------------

template <typename T>
struct PooledFeatures {
  Tensor<T> vector;  // [B x 3*state_width]
};

template <typename T>
PooledFeatures<T> masked_pool(const EncodedSequence<T>& enc) {
  Graph<T> g(false);
  Var<T> s = g.input(enc.states);
  auto lens = std::make_shared<const std::vector<std::size_t>>(enc.mask.lengths);
  return {masked_pool(s, lens).value()};
}

// Class probabilities, [B x C].
template <typename T>
Tensor<T> classify(const HeadParams<T>& p, const PooledFeatures<T>& f) {
  Graph<T> g(false);
  HeadVars<T> vars = bind_head(g, p, "head", false);
  return softmax(head_logits(vars, g.input(f.vector))).value();
}

// Mean negative log likelihood from probabilities.
template <typename T>
T cross_entropy(const Tensor<T>& probs, const std::vector<int>& labels) {
  if (probs.rank() != 2)
    throw DimError("cross_entropy: expected [batch x classes], got " +
                   shape_str(probs.shape()));
  detail::check_labels(labels, probs.extent(0), probs.extent(1));
  T acc = 0;
  for (std::size_t b = 0; b < probs.extent(0); ++b)
    acc -= std::log(probs.at2(b, static_cast<std::size_t>(labels[b])));
  return acc / static_cast<T>(probs.extent(0));
}

}  // namespace rcrn
