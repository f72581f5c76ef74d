// Copyright 2026 The rcrn Authors
// SPDX-License-Identifier: Apache-2.0
//
// Sequence-level encoders. Three kinds share one surface:
//   rcrn            controller (two bidirectional atom branches) + listener
//                   + element-wise gated scan + output combine
//   bilstm          one bidirectional atom layer
//   stacked_bilstm  N bidirectional atom layers feeding each other
//
// All encoders consume [B x T x input_dim] step inputs with a validity mask
// and produce [B x T x 2*hidden_dim] states that are exactly zero at padded
// positions. Recurrent state is gated by the mask each step, so a backward
// pass effectively starts at each example's true last token and appending
// padding never changes unmasked outputs.

#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "rcrn/cells.hpp"
#include "rcrn/errors.hpp"
#include "rcrn/graph.hpp"
#include "rcrn/scan.hpp"
#include "rcrn/tensor.hpp"

namespace rcrn {

enum class EncoderKind { rcrn, bilstm, stacked_bilstm };

inline std::string to_string(EncoderKind k) {
  switch (k) {
    case EncoderKind::rcrn: return "rcrn";
    case EncoderKind::bilstm: return "bilstm";
    default: return "stacked_bilstm";
  }
}

inline EncoderKind parse_encoder_kind(const std::string& s) {
  if (s == "rcrn") return EncoderKind::rcrn;
  if (s == "bilstm") return EncoderKind::bilstm;
  if (s == "stacked_bilstm") return EncoderKind::stacked_bilstm;
  throw ConfigError(
      "encoder_kind must be 'rcrn', 'bilstm' or 'stacked_bilstm', got '" + s +
      "'");
}

struct EncoderConfig {
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;  // per direction
  AtomKind atom = AtomKind::lstm;
  EncoderKind kind = EncoderKind::rcrn;
  std::size_t layers = 3;  // stacked_bilstm only
  OutputGateMode output_gate = OutputGateMode::gated_c4;
  std::uint64_t seed = 1;
};

void validate_config(const EncoderConfig& cfg);

// Exact trainable-scalar count of the encoder alone (no embeddings, no head).
std::size_t count_params(const EncoderConfig& cfg);

// Per-batch validity mask. bits is row-major [batch x steps] of {0,1}; every
// row must be a prefix of ones (padding only at the end).
struct BatchMask {
  std::size_t batch = 0;
  std::size_t steps = 0;
  std::vector<std::uint8_t> bits;
  std::vector<std::size_t> lengths;

  static BatchMask full(std::size_t batch, std::size_t steps);
  static BatchMask from_lengths(const std::vector<std::size_t>& lens,
                                std::size_t steps);
  // Throws DataError unless bits is prefix-shaped and lengths agree with it.
  void validate() const;

  std::uint8_t at(std::size_t b, std::size_t t) const {
    return bits[b * steps + t];
  }
  bool all_full() const;

  template <typename T>
  Tensor<T> to_tensor() const {
    Tensor<T> m({batch, steps});
    T* p = m.unshared_data();
    for (std::size_t i = 0; i < bits.size(); ++i) p[i] = static_cast<T>(bits[i]);
    return m;
  }
};

template <typename T>
struct EncodedSequence {
  Tensor<T> states;  // [B x T x 2d], zero at padded positions
  BatchMask mask;
};

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

template <typename T>
struct BiParams {
  CellParams<T> fwd, bwd;
};

template <typename T>
struct RcrnParams {
  BiParams<T> ctrl1;     // gate-signal branch
  BiParams<T> ctrl2;     // output-signal branch
  BiParams<T> listener;  // base recurrent layer
};

template <typename T>
struct StackParams {
  std::vector<BiParams<T>> layers;
};

template <typename T>
using EncoderParams = std::variant<RcrnParams<T>, BiParams<T>, StackParams<T>>;

template <typename T>
EncoderParams<T> init_encoder(const EncoderConfig& cfg, InitScheme scheme,
                              std::mt19937_64& rng) {
  validate_config(cfg);
  CellDims din{cfg.input_dim, cfg.hidden_dim};
  auto bi = [&](CellDims d) {
    BiParams<T> p;
    p.fwd = init_cell<T>(cfg.atom, scheme, d, rng);
    p.bwd = init_cell<T>(cfg.atom, scheme, d, rng);
    return p;
  };
  switch (cfg.kind) {
    case EncoderKind::bilstm:
      return bi(din);
    case EncoderKind::rcrn: {
      RcrnParams<T> p;
      p.ctrl1 = bi(din);
      p.ctrl2 = bi(din);
      p.listener = bi(din);
      return p;
    }
    default: {
      StackParams<T> p;
      p.layers.push_back(bi(din));
      CellDims dwide{2 * cfg.hidden_dim, cfg.hidden_dim};
      for (std::size_t l = 1; l < cfg.layers; ++l) p.layers.push_back(bi(dwide));
      return p;
    }
  }
}

template <typename T>
EncoderParams<T> init_encoder(const EncoderConfig& cfg,
                              InitScheme scheme = InitScheme::glorot_uniform) {
  std::mt19937_64 rng(cfg.seed);
  return init_encoder<T>(cfg, scheme, rng);
}

template <typename BP, typename F>
void visit_bi_params(BP& p, const std::string& prefix, F&& f) {
  visit_cell_params(p.fwd, prefix + ".fwd", f);
  visit_cell_params(p.bwd, prefix + ".bwd", f);
}

template <typename RP, typename F>
void visit_rcrn_params(RP& p, const std::string& prefix, F&& f) {
  visit_bi_params(p.ctrl1, prefix + ".ctrl1", f);
  visit_bi_params(p.ctrl2, prefix + ".ctrl2", f);
  visit_bi_params(p.listener, prefix + ".listener", f);
}

template <typename SP, typename F>
void visit_stack_params(SP& p, const std::string& prefix, F&& f) {
  for (std::size_t l = 0; l < p.layers.size(); ++l)
    visit_bi_params(p.layers[l], prefix + ".l" + std::to_string(l), f);
}

template <typename T, typename F>
void visit_encoder_params(EncoderParams<T>& p, const std::string& prefix,
                          F&& f) {
  if (auto* r = std::get_if<RcrnParams<T>>(&p)) visit_rcrn_params(*r, prefix, f);
  else if (auto* b = std::get_if<BiParams<T>>(&p)) visit_bi_params(*b, prefix, f);
  else visit_stack_params(std::get<StackParams<T>>(p), prefix, f);
}

template <typename T, typename F>
void visit_encoder_params(const EncoderParams<T>& p, const std::string& prefix,
                          F&& f) {
  if (auto* r = std::get_if<RcrnParams<T>>(&p)) visit_rcrn_params(*r, prefix, f);
  else if (auto* b = std::get_if<BiParams<T>>(&p)) visit_bi_params(*b, prefix, f);
  else visit_stack_params(std::get<StackParams<T>>(p), prefix, f);
}

// ---------------------------------------------------------------------------
// Graph binding and assembly
// ---------------------------------------------------------------------------

template <typename T>
struct BiVars {
  CellVars<T> fwd, bwd;
};

template <typename T>
struct RcrnVars {
  BiVars<T> ctrl1, ctrl2, listener;
};

template <typename T>
struct StackVars {
  std::vector<BiVars<T>> layers;
};

template <typename T>
using EncoderVars = std::variant<RcrnVars<T>, BiVars<T>, StackVars<T>>;

template <typename T>
BiVars<T> bind_bi(Graph<T>& g, const BiParams<T>& p, const std::string& prefix,
                  bool trainable) {
  return {bind_cell(g, p.fwd, prefix + ".fwd", trainable),
          bind_cell(g, p.bwd, prefix + ".bwd", trainable)};
}

template <typename T>
EncoderVars<T> bind_encoder(Graph<T>& g, const EncoderParams<T>& p,
                            const std::string& prefix, bool trainable = true) {
  if (const auto* r = std::get_if<RcrnParams<T>>(&p)) {
    RcrnVars<T> v;
    v.ctrl1 = bind_bi(g, r->ctrl1, prefix + ".ctrl1", trainable);
    v.ctrl2 = bind_bi(g, r->ctrl2, prefix + ".ctrl2", trainable);
    v.listener = bind_bi(g, r->listener, prefix + ".listener", trainable);
    return v;
  }
  if (const auto* b = std::get_if<BiParams<T>>(&p))
    return bind_bi(g, *b, prefix, trainable);
  const auto& s = std::get<StackParams<T>>(p);
  StackVars<T> v;
  for (std::size_t l = 0; l < s.layers.size(); ++l)
    v.layers.push_back(
        bind_bi(g, s.layers[l], prefix + ".l" + std::to_string(l), trainable));
  return v;
}

namespace detail {

// Splits a host [B x T x F] tensor into T input nodes of [B x F].
template <typename T>
std::vector<Var<T>> bind_steps(Graph<T>& g, const Tensor<T>& seq) {
  if (seq.rank() != 3)
    throw DimError("encode: expected [batch x steps x features], got " +
                   shape_str(seq.shape()));
  std::size_t B = seq.extent(0), Tn = seq.extent(1), F = seq.extent(2);
  std::vector<Var<T>> steps;
  steps.reserve(Tn);
  for (std::size_t t = 0; t < Tn; ++t) {
    Tensor<T> st({B, F});
    T* o = st.unshared_data();
    for (std::size_t b = 0; b < B; ++b) {
      const T* src = seq.data() + (b * Tn + t) * F;
      std::copy(src, src + F, o + b * F);
    }
    steps.push_back(g.input(std::move(st)));
  }
  return steps;
}

// Mask tiles: one [B x width] input node per step, rows equal to mask(b, t).
template <typename T>
std::vector<Var<T>> make_mask_tiles(Graph<T>& g, const BatchMask& mask,
                                    std::size_t width) {
  std::vector<Var<T>> tiles;
  tiles.reserve(mask.steps);
  for (std::size_t t = 0; t < mask.steps; ++t) {
    Tensor<T> m({mask.batch, width});
    T* p = m.unshared_data();
    for (std::size_t b = 0; b < mask.batch; ++b) {
      T v = static_cast<T>(mask.at(b, t));
      for (std::size_t w = 0; w < width; ++w) p[b * width + w] = v;
    }
    tiles.push_back(g.input(std::move(m)));
  }
  return tiles;
}

template <typename T>
Tensor<T> mask_block(const BatchMask& mask, std::size_t width) {
  Tensor<T> m({mask.batch, mask.steps, width});
  T* p = m.unshared_data();
  for (std::size_t b = 0; b < mask.batch; ++b)
    for (std::size_t t = 0; t < mask.steps; ++t) {
      T v = static_cast<T>(mask.at(b, t));
      for (std::size_t w = 0; w < width; ++w)
        p[(b * mask.steps + t) * width + w] = v;
    }
  return m;
}

}  // namespace detail

// Per-step hidden and cell outputs of one directional pass, in time order.
// For GRU atoms c[t] aliases h[t].
template <typename T>
struct PassOut {
  std::vector<Var<T>> h, c;
};

template <typename T>
PassOut<T> run_atom_pass(Graph<T>& g, const CellVars<T>& cell,
                         const std::vector<Var<T>>& x_steps,
                         const std::vector<Var<T>>& mask_tiles,
                         std::size_t batch, std::size_t hidden_dim,
                         bool reverse) {
  const std::size_t Tn = x_steps.size();
  PassOut<T> out;
  out.h.resize(Tn);
  out.c.resize(Tn);
  Var<T> h = g.input(Tensor<T>::zeros({batch, hidden_dim}));
  Var<T> c = h;
  for (std::size_t idx = 0; idx < Tn; ++idx) {
    std::size_t t = reverse ? Tn - 1 - idx : idx;
    auto [hn, cn] = atom_step(cell, x_steps[t], h, c);
    if (!mask_tiles.empty()) {
      h = mul(hn, mask_tiles[t]);
      c = cn.id == hn.id ? h : mul(cn, mask_tiles[t]);
    } else {
      h = hn;
      c = cn.id == hn.id ? h : cn;
    }
    out.h[t] = h;
    out.c[t] = c;
  }
  return out;
}

// Both directions, concatenated per step to width 2d. Cell states are
// concatenated exactly like hidden states.
template <typename T>
struct BiStepOut {
  std::vector<Var<T>> h, c;
};

template <typename T>
BiStepOut<T> run_bi(Graph<T>& g, const BiVars<T>& p,
                    const std::vector<Var<T>>& x_steps,
                    const std::vector<Var<T>>& mask_tiles, std::size_t batch,
                    std::size_t hidden_dim) {
  PassOut<T> f = run_atom_pass(g, p.fwd, x_steps, mask_tiles, batch,
                               hidden_dim, false);
  PassOut<T> b = run_atom_pass(g, p.bwd, x_steps, mask_tiles, batch,
                               hidden_dim, true);
  const std::size_t Tn = x_steps.size();
  BiStepOut<T> out;
  out.h.resize(Tn);
  out.c.resize(Tn);
  for (std::size_t t = 0; t < Tn; ++t) {
    out.h[t] = concat<T>({f.h[t], b.h[t]}, 1);
    out.c[t] = concat<T>({f.c[t], b.c[t]}, 1);
  }
  return out;
}

// Full encoder forward as one differentiable graph fragment. Returns the
// [B x T x 2d] state block.
template <typename T>
Var<T> encode_graph(Graph<T>& g, const EncoderConfig& cfg,
                    const EncoderVars<T>& vars,
                    const std::vector<Var<T>>& x_steps, const BatchMask& mask,
                    ScanExec exec = {}) {
  const std::size_t B = mask.batch, d = cfg.hidden_dim;
  if (x_steps.size() != mask.steps)
    throw DimError("encode: " + std::to_string(x_steps.size()) +
                   " steps vs mask of " + std::to_string(mask.steps));
  const bool padded = !mask.all_full();
  std::vector<Var<T>> tiles;
  if (padded) tiles = detail::make_mask_tiles(g, mask, d);

  if (const auto* rv = std::get_if<RcrnVars<T>>(&vars)) {
    if (cfg.kind != EncoderKind::rcrn)
      throw ContractError("encode: params/config kind mismatch");
    BiStepOut<T> b1 = run_bi(g, rv->ctrl1, x_steps, tiles, B, d);
    BiStepOut<T> b2 = run_bi(g, rv->ctrl2, x_steps, tiles, B, d);
    BiStepOut<T> bl = run_bi(g, rv->listener, x_steps, tiles, B, d);
    Var<T> gate = stack_steps(b1.h);
    Var<T> val = stack_steps(bl.h);
    Var<T> c0 = g.input(Tensor<T>::zeros({B, 2 * d}));
    Var<T> c4 = scan(gate, val, c0, exec);
    Var<T> h2s = stack_steps(b2.h);
    Var<T> out = cfg.output_gate == OutputGateMode::literal
                     ? mul(h2s, stack_steps(bl.c))
                     : mul(sigmoid(h2s), c4);
    if (padded) out = mul(out, g.input(detail::mask_block<T>(mask, 2 * d)));
    return out;
  }
  if (const auto* bv = std::get_if<BiVars<T>>(&vars)) {
    if (cfg.kind != EncoderKind::bilstm)
      throw ContractError("encode: params/config kind mismatch");
    return stack_steps(run_bi(g, *bv, x_steps, tiles, B, d).h);
  }
  const auto& sv = std::get<StackVars<T>>(vars);
  if (cfg.kind != EncoderKind::stacked_bilstm)
    throw ContractError("encode: params/config kind mismatch");
  if (sv.layers.empty()) throw ContractError("encode: empty stack");
  std::vector<Var<T>> cur = x_steps;
  for (const BiVars<T>& layer : sv.layers)
    cur = run_bi(g, layer, cur, tiles, B, d).h;
  return stack_steps(cur);
}

// ---------------------------------------------------------------------------
// Value-level surface
// ---------------------------------------------------------------------------

template <typename T>
EncodedSequence<T> encode_sequence(const EncoderConfig& cfg,
                                   const EncoderParams<T>& params,
                                   const Tensor<T>& seq, const BatchMask& mask,
                                   ScanExec exec = {}) {
  validate_config(cfg);
  mask.validate();
  if (seq.rank() != 3 || seq.extent(0) != mask.batch ||
      seq.extent(1) != mask.steps || seq.extent(2) != cfg.input_dim)
    throw DimError("encode: input " + shape_str(seq.shape()) +
                   " does not match batch " + std::to_string(mask.batch) +
                   ", steps " + std::to_string(mask.steps) + ", input_dim " +
                   std::to_string(cfg.input_dim));
  Graph<T> g(false);
  EncoderVars<T> vars = bind_encoder(g, params, "enc", false);
  std::vector<Var<T>> x = detail::bind_steps(g, seq);
  Var<T> out = encode_graph(g, cfg, vars, x, mask, exec);
  return {out.value(), mask};
}

template <typename T>
EncodedSequence<T> rcrn_encode(const EncoderConfig& cfg,
                               const RcrnParams<T>& params,
                               const Tensor<T>& seq, const BatchMask& mask,
                               ScanExec exec = {}) {
  return encode_sequence<T>(cfg, EncoderParams<T>(params), seq, mask, exec);
}

template <typename T>
EncodedSequence<T> stacked_bilstm_encode(const EncoderConfig& cfg,
                                         const StackParams<T>& params,
                                         const Tensor<T>& seq,
                                         const BatchMask& mask) {
  return encode_sequence<T>(cfg, EncoderParams<T>(params), seq, mask);
}

// Raw per-direction outputs, each [B x T x d], for callers that want the
// halves before concatenation.
template <typename T>
struct BiEncoded {
  Tensor<T> h_fwd, h_bwd, c_fwd, c_bwd;
};

template <typename T>
BiEncoded<T> bidirectional_encode(const CellParams<T>& fwd,
                                  const CellParams<T>& bwd,
                                  const Tensor<T>& seq, const BatchMask& mask) {
  mask.validate();
  CellDims df = cell_dims(fwd), db = cell_dims(bwd);
  if (df.input_dim != db.input_dim || df.hidden_dim != db.hidden_dim)
    throw DimError("bidirectional_encode: branch dims disagree");
  if (seq.rank() != 3 || seq.extent(0) != mask.batch ||
      seq.extent(1) != mask.steps || seq.extent(2) != df.input_dim)
    throw DimError("bidirectional_encode: input " + shape_str(seq.shape()) +
                   " inconsistent with mask/params");
  Graph<T> g(false);
  CellVars<T> fv = bind_cell(g, fwd, "fwd", false);
  CellVars<T> bv = bind_cell(g, bwd, "bwd", false);
  std::vector<Var<T>> x = detail::bind_steps(g, seq);
  std::vector<Var<T>> tiles;
  if (!mask.all_full()) tiles = detail::make_mask_tiles(g, mask, df.hidden_dim);
  PassOut<T> f =
      run_atom_pass(g, fv, x, tiles, mask.batch, df.hidden_dim, false);
  PassOut<T> b =
      run_atom_pass(g, bv, x, tiles, mask.batch, df.hidden_dim, true);
  return {stack_steps(f.h).value(), stack_steps(b.h).value(),
          stack_steps(f.c).value(), stack_steps(b.c).value()};
}

}  // namespace rcrn
