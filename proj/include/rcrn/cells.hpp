// Copyright 2026 The rcrn Authors
// SPDX-License-Identifier: Apache-2.0
//
// Single-timestep recurrent cells. LSTM and GRU are the atoms; the controller
// runs two independent atom branches over the same input, producing the two
// gate signals consumed downstream. Parameters live in plain structs of
// tensors; bind_cell() turns them into named graph leaves, visit_params() walks
// them in a fixed order shared by the optimizer and the checkpoint writer.

#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <variant>

#include "rcrn/errors.hpp"
#include "rcrn/graph.hpp"
#include "rcrn/tensor.hpp"

namespace rcrn {

enum class AtomKind { lstm, gru };

inline std::string to_string(AtomKind k) {
  return k == AtomKind::lstm ? "lstm" : "gru";
}

inline AtomKind parse_atom_kind(const std::string& s) {
  if (s == "lstm") return AtomKind::lstm;
  if (s == "gru") return AtomKind::gru;
  throw ConfigError("atom must be 'lstm' or 'gru', got '" + s + "'");
}

enum class InitScheme { glorot_uniform, zeros };

struct CellDims {
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;
};

// One gate's weight triple: W maps the input, U maps the previous hidden
// state, b is the bias. W is [hidden x input], U is [hidden x hidden].
template <typename T>
struct GateParams {
  Tensor<T> W, U, b;
};

template <typename T>
struct LstmParams {
  GateParams<T> i, f, o, c;
  CellDims dims;
};

template <typename T>
struct GruParams {
  GateParams<T> z, r, n;
  CellDims dims;
};

template <typename T>
using CellParams = std::variant<LstmParams<T>, GruParams<T>>;

template <typename T>
struct ControllerParams {
  CellParams<T> branch1, branch2;
};

template <typename T>
CellDims cell_dims(const CellParams<T>& p) {
  return std::visit([](const auto& c) { return c.dims; }, p);
}

template <typename T>
AtomKind cell_kind(const CellParams<T>& p) {
  return std::holds_alternative<LstmParams<T>>(p) ? AtomKind::lstm
                                                  : AtomKind::gru;
}

// ---------------------------------------------------------------------------
// Initialization
// ---------------------------------------------------------------------------

namespace detail {

template <typename T>
GateParams<T> init_gate(CellDims d, InitScheme scheme, T bias_value,
                        std::mt19937_64& rng) {
  GateParams<T> g;
  if (scheme == InitScheme::zeros) {
    g.W = Tensor<T>::zeros({d.hidden_dim, d.input_dim});
    g.U = Tensor<T>::zeros({d.hidden_dim, d.hidden_dim});
    g.b = Tensor<T>::zeros({d.hidden_dim});
    return g;
  }
  T wb = static_cast<T>(
      std::sqrt(6.0 / static_cast<double>(d.input_dim + d.hidden_dim)));
  T ub = static_cast<T>(std::sqrt(6.0 / static_cast<double>(2 * d.hidden_dim)));
  g.W = Tensor<T>::uniform({d.hidden_dim, d.input_dim}, -wb, wb, rng);
  g.U = Tensor<T>::uniform({d.hidden_dim, d.hidden_dim}, -ub, ub, rng);
  g.b = Tensor<T>::full({d.hidden_dim}, bias_value);
  return g;
}

}  // namespace detail

// Glorot-uniform weights, zero biases except the carry gate (LSTM forget
// gate, GRU update gate) which starts at 1.0 so early training does not
// flush state. Gate order is fixed, so a seed fully determines the result.
template <typename T>
CellParams<T> init_cell(AtomKind kind, InitScheme scheme, CellDims dims,
                        std::mt19937_64& rng) {
  if (dims.input_dim == 0 || dims.hidden_dim == 0)
    throw ContractError("init_cell: dims must be positive");
  T carry = scheme == InitScheme::zeros ? T(0) : T(1);
  if (kind == AtomKind::lstm) {
    LstmParams<T> p;
    p.dims = dims;
    p.i = detail::init_gate<T>(dims, scheme, T(0), rng);
    p.f = detail::init_gate<T>(dims, scheme, carry, rng);
    p.o = detail::init_gate<T>(dims, scheme, T(0), rng);
    p.c = detail::init_gate<T>(dims, scheme, T(0), rng);
    return p;
  }
  GruParams<T> p;
  p.dims = dims;
  p.z = detail::init_gate<T>(dims, scheme, carry, rng);
  p.r = detail::init_gate<T>(dims, scheme, T(0), rng);
  p.n = detail::init_gate<T>(dims, scheme, T(0), rng);
  return p;
}

template <typename T>
CellParams<T> init_params(AtomKind kind, InitScheme scheme, CellDims dims,
                          std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return init_cell<T>(kind, scheme, dims, rng);
}

template <typename T>
ControllerParams<T> init_controller(AtomKind kind, InitScheme scheme,
                                    CellDims dims, std::mt19937_64& rng) {
  ControllerParams<T> p;
  p.branch1 = init_cell<T>(kind, scheme, dims, rng);
  p.branch2 = init_cell<T>(kind, scheme, dims, rng);
  return p;
}

// ---------------------------------------------------------------------------
// Parameter traversal
// ---------------------------------------------------------------------------

// Visits every tensor as (name, tensor) in a fixed order. P may be const or
// mutable; F receives the matching reference.

template <typename GP, typename F>
void visit_gate_params(GP& g, const std::string& prefix, F&& f) {
  f(prefix + ".W", g.W);
  f(prefix + ".U", g.U);
  f(prefix + ".b", g.b);
}

template <typename LP, typename F>
void visit_lstm_params(LP& p, const std::string& prefix, F&& f) {
  visit_gate_params(p.i, prefix + ".i", f);
  visit_gate_params(p.f, prefix + ".f", f);
  visit_gate_params(p.o, prefix + ".o", f);
  visit_gate_params(p.c, prefix + ".c", f);
}

template <typename GP, typename F>
void visit_gru_params(GP& p, const std::string& prefix, F&& f) {
  visit_gate_params(p.z, prefix + ".z", f);
  visit_gate_params(p.r, prefix + ".r", f);
  visit_gate_params(p.n, prefix + ".n", f);
}

template <typename T, typename F>
void visit_cell_params(CellParams<T>& p, const std::string& prefix, F&& f) {
  if (auto* l = std::get_if<LstmParams<T>>(&p)) visit_lstm_params(*l, prefix, f);
  else visit_gru_params(std::get<GruParams<T>>(p), prefix, f);
}

template <typename T, typename F>
void visit_cell_params(const CellParams<T>& p, const std::string& prefix,
                       F&& f) {
  if (auto* l = std::get_if<LstmParams<T>>(&p)) visit_lstm_params(*l, prefix, f);
  else visit_gru_params(std::get<GruParams<T>>(p), prefix, f);
}

template <typename CP, typename F>
void visit_controller_params(CP& p, const std::string& prefix, F&& f) {
  visit_cell_params(p.branch1, prefix + ".b1", f);
  visit_cell_params(p.branch2, prefix + ".b2", f);
}

// ---------------------------------------------------------------------------
// Graph binding
// ---------------------------------------------------------------------------

template <typename T>
struct GateVars {
  Var<T> W, U, b;
};

template <typename T>
struct LstmVars {
  GateVars<T> i, f, o, c;
};

template <typename T>
struct GruVars {
  GateVars<T> z, r, n;
};

template <typename T>
using CellVars = std::variant<LstmVars<T>, GruVars<T>>;

template <typename T>
struct ControllerVars {
  CellVars<T> branch1, branch2;
};

namespace detail {

template <typename T>
GateVars<T> bind_gate(Graph<T>& g, const GateParams<T>& p,
                      const std::string& prefix, bool trainable) {
  auto leaf = [&](const std::string& n, const Tensor<T>& t) {
    return trainable ? g.param(n, t) : g.input(t);
  };
  return {leaf(prefix + ".W", p.W), leaf(prefix + ".U", p.U),
          leaf(prefix + ".b", p.b)};
}

}  // namespace detail

template <typename T>
CellVars<T> bind_cell(Graph<T>& g, const CellParams<T>& p, const std::string& prefix,
                 bool trainable = true) {
  if (const auto* l = std::get_if<LstmParams<T>>(&p)) {
    LstmVars<T> v;
    v.i = detail::bind_gate(g, l->i, prefix + ".i", trainable);
    v.f = detail::bind_gate(g, l->f, prefix + ".f", trainable);
    v.o = detail::bind_gate(g, l->o, prefix + ".o", trainable);
    v.c = detail::bind_gate(g, l->c, prefix + ".c", trainable);
    return v;
  }
  const auto& r = std::get<GruParams<T>>(p);
  GruVars<T> v;
  v.z = detail::bind_gate(g, r.z, prefix + ".z", trainable);
  v.r = detail::bind_gate(g, r.r, prefix + ".r", trainable);
  v.n = detail::bind_gate(g, r.n, prefix + ".n", trainable);
  return v;
}

template <typename T>
ControllerVars<T> bind_controller(Graph<T>& g, const ControllerParams<T>& p,
                       const std::string& prefix, bool trainable = true) {
  return {bind_cell(g, p.branch1, prefix + ".b1", trainable),
          bind_cell(g, p.branch2, prefix + ".b2", trainable)};
}

// ---------------------------------------------------------------------------
// Steps (graph level)
// ---------------------------------------------------------------------------

// x is [B x input_dim], states are [B x hidden_dim].
template <typename T>
std::pair<Var<T>, Var<T>> lstm_step(const LstmVars<T>& p, Var<T> x,
                                    Var<T> h_prev, Var<T> c_prev) {
  Var<T> ig = sigmoid(affine_nt(x, p.i.W, h_prev, p.i.U, p.i.b));
  Var<T> fg = sigmoid(affine_nt(x, p.f.W, h_prev, p.f.U, p.f.b));
  Var<T> og = sigmoid(affine_nt(x, p.o.W, h_prev, p.o.U, p.o.b));
  Var<T> cand = tanh(affine_nt(x, p.c.W, h_prev, p.c.U, p.c.b));
  Var<T> c = add(mul(fg, c_prev), mul(ig, cand));
  Var<T> h = mul(og, tanh(c));
  return {h, c};
}

template <typename T>
Var<T> gru_step(const GruVars<T>& p, Var<T> x, Var<T> h_prev) {
  Var<T> z = sigmoid(affine_nt(x, p.z.W, h_prev, p.z.U, p.z.b));
  Var<T> r = sigmoid(affine_nt(x, p.r.W, h_prev, p.r.U, p.r.b));
  Var<T> n = tanh(affine_nt(x, p.n.W, mul(r, h_prev), p.n.U, p.n.b));
  return add(mul(z, h_prev), mul(one_minus(z), n));
}

// Uniform (h, c) step over either atom. GRUs expose a single state, so both
// outputs alias it and downstream consumers of the cell state receive the
// hidden state instead.
template <typename T>
std::pair<Var<T>, Var<T>> atom_step(const CellVars<T>& p, Var<T> x,
                                    Var<T> h_prev, Var<T> c_prev) {
  if (const auto* l = std::get_if<LstmVars<T>>(&p))
    return lstm_step(*l, x, h_prev, c_prev);
  Var<T> h = gru_step(std::get<GruVars<T>>(p), x, h_prev);
  return {h, h};
}

// ---------------------------------------------------------------------------
// Steps (value level)
// ---------------------------------------------------------------------------

template <typename T>
struct StepOut {
  Tensor<T> h, c;
};

// Per-timestep state of the two controller branches, [B x hidden_dim] each.
template <typename T>
struct ControllerState {
  Tensor<T> c1, c2, h1, h2;
};

template <typename T>
ControllerState<T> zero_controller_state(std::size_t batch,
                                         std::size_t hidden_dim) {
  Tensor<T> z = Tensor<T>::zeros({batch, hidden_dim});
  return {z, z, z, z};
}

template <typename T>
StepOut<T> lstm_step(const LstmParams<T>& p, const Tensor<T>& x,
                     const Tensor<T>& h_prev, const Tensor<T>& c_prev) {
  Graph<T> g(false);
  CellParams<T> cp = p;
  auto vars = std::get<LstmVars<T>>(bind_cell(g, cp, "cell", false));
  auto [h, c] = lstm_step(vars, g.input(x), g.input(h_prev), g.input(c_prev));
  return {h.value(), c.value()};
}

template <typename T>
Tensor<T> gru_step(const GruParams<T>& p, const Tensor<T>& x,
                   const Tensor<T>& h_prev) {
  Graph<T> g(false);
  CellParams<T> cp = p;
  auto vars = std::get<GruVars<T>>(bind_cell(g, cp, "cell", false));
  return gru_step(vars, g.input(x), g.input(h_prev)).value();
}

// Advances both branches over the same input. With GRU atoms the c fields
// mirror the h fields.
template <typename T>
ControllerState<T> controller_step(const ControllerParams<T>& p,
                                   const Tensor<T>& x,
                                   const ControllerState<T>& prev) {
  Graph<T> g(false);
  ControllerVars<T> vars = bind_controller(g, p, "ctrl", false);
  Var<T> xv = g.input(x);
  auto [h1, c1] =
      atom_step(vars.branch1, xv, g.input(prev.h1), g.input(prev.c1));
  auto [h2, c2] =
      atom_step(vars.branch2, xv, g.input(prev.h2), g.input(prev.c2));
  return {c1.value(), c2.value(), h1.value(), h2.value()};
}

}  // namespace rcrn
