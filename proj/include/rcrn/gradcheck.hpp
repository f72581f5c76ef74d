// Copyright 2026 The rcrn Authors
// SPDX-License-Identifier: Apache-2.0
//
// Finite-difference verification of the backward pass. Each case builds a
// small double-precision graph whose loss mixes every output coordinate with
// fixed random weights, runs one reverse sweep, then probes every parameter
// leaf with central differences. The `inject` knob corrupts one analytic
// gradient entry so tests can prove the harness detects broken gradients.

#pragma once

#include <random>
#include <string>
#include <vector>

#include "rcrn/cells.hpp"
#include "rcrn/encoder.hpp"
#include "rcrn/graph.hpp"
#include "rcrn/model.hpp"
#include "rcrn/scan.hpp"

namespace rcrn {

struct GradCheckCase {
  std::string name;
  std::string worst_param;
  double max_rel_err = 0;
  double tol = 0;
  bool pass = false;
};

struct GradCheckOptions {
  double eps = 1e-5;
  double tol = 1e-4;
  double inject = 0;  // added to one analytic gradient entry; 0 disables
  std::uint64_t seed = 7;
};

namespace detail {

inline Var<double> mix(Graph<double>& g, Var<double> v, std::mt19937_64& rng) {
  Tensor<double> w = Tensor<double>::uniform(v.shape(), -1.0, 1.0, rng);
  return sum(mul(v, g.input(w)));
}

template <typename Build>
GradCheckCase run_case(const std::string& name, const GradCheckOptions& opt,
                       Build&& build) {
  std::mt19937_64 rng(opt.seed);
  Graph<double> g;
  Var<double> loss = build(g, rng);
  GradientMap<double> grads = g.backward(loss);
  if (opt.inject != 0 && !grads.empty() && grads.begin()->second.size() > 0)
    grads.begin()->second.unshared_data()[0] += opt.inject;
  GradCheckCase out;
  out.name = name;
  out.tol = opt.tol;
  for (const auto& [pname, id] : g.param_leaves()) {
    double err =
        finite_diff_check(g, loss, Var<double>{&g, id}, grads.at(pname),
                          opt.eps);
    if (err > out.max_rel_err || out.worst_param.empty()) {
      out.max_rel_err = err;
      out.worst_param = pname;
    }
  }
  out.pass = out.max_rel_err <= opt.tol;
  return out;
}

inline Var<double> param_uniform(Graph<double>& g, const std::string& name,
                                 Shape shape, std::mt19937_64& rng) {
  return g.param(name, Tensor<double>::uniform(shape, -1.0, 1.0, rng));
}

// Two recurrent steps of one atom; the loss sees both steps' h (and c for
// LSTM), so errors in the state chaining cannot cancel.
inline GradCheckCase atom_case(const std::string& name, AtomKind kind,
                               const GradCheckOptions& opt) {
  return run_case(name, opt, [kind](Graph<double>& g, std::mt19937_64& rng) {
    CellDims dims{4, 3};
    auto p = init_params<double>(kind, InitScheme::glorot_uniform, dims, 11);
    CellVars<double> vars = bind_cell(g, p, "cell");
    Var<double> x0 = param_uniform(g, "x0", {2, 4}, rng);
    Var<double> x1 = param_uniform(g, "x1", {2, 4}, rng);
    Var<double> h = param_uniform(g, "h0", {2, 3}, rng);
    Var<double> c = param_uniform(g, "c0", {2, 3}, rng);
    auto [h1, c1] = atom_step(vars, x0, h, c);
    auto [h2, c2] = atom_step(vars, x1, h1, c1);
    Var<double> loss = add(mix(g, h1, rng), mix(g, h2, rng));
    if (kind == AtomKind::lstm) loss = add(loss, mix(g, c2, rng));
    return loss;
  });
}

inline GradCheckCase controller_case(const GradCheckOptions& opt) {
  return run_case("controller_cell", opt,
                  [](Graph<double>& g, std::mt19937_64& rng) {
    CellDims dims{4, 3};
    std::mt19937_64 prng(13);
    ControllerParams<double> p = init_controller<double>(
        AtomKind::lstm, InitScheme::glorot_uniform, dims, prng);
    ControllerVars<double> vars = bind_controller(g, p, "ctrl");
    Var<double> x0 = param_uniform(g, "x0", {2, 4}, rng);
    Var<double> x1 = param_uniform(g, "x1", {2, 4}, rng);
    Var<double> h1 = param_uniform(g, "h1", {2, 3}, rng);
    Var<double> c1 = param_uniform(g, "c1", {2, 3}, rng);
    Var<double> h2 = param_uniform(g, "h2", {2, 3}, rng);
    Var<double> c2 = param_uniform(g, "c2", {2, 3}, rng);
    auto [h1a, c1a] = atom_step(vars.branch1, x0, h1, c1);
    auto [h2a, c2a] = atom_step(vars.branch2, x0, h2, c2);
    auto [h1b, c1b] = atom_step(vars.branch1, x1, h1a, c1a);
    auto [h2b, c2b] = atom_step(vars.branch2, x1, h2a, c2a);
    return add(add(mix(g, h1b, rng), mix(g, h2b, rng)),
               add(mix(g, c1b, rng), mix(g, c2b, rng)));
  });
}

// Listener atom over three steps, mixing every h and c output, since both
// streams feed the encoder's combine stage.
inline GradCheckCase listener_case(const GradCheckOptions& opt) {
  return run_case("listener_cell", opt,
                  [](Graph<double>& g, std::mt19937_64& rng) {
    CellDims dims{3, 2};
    auto p = init_params<double>(AtomKind::lstm, InitScheme::glorot_uniform,
                                 dims, 17);
    CellVars<double> vars = bind_cell(g, p, "listener");
    Var<double> h = param_uniform(g, "h0", {2, 2}, rng);
    Var<double> c = param_uniform(g, "c0", {2, 2}, rng);
    Var<double> loss{};
    for (int t = 0; t < 3; ++t) {
      Var<double> x =
          param_uniform(g, "x" + std::to_string(t), {2, 3}, rng);
      auto [hn, cn] = atom_step(vars, x, h, c);
      h = hn;
      c = cn;
      Var<double> term = add(mix(g, hn, rng), mix(g, cn, rng));
      loss = loss.valid() ? add(loss, term) : term;
    }
    return loss;
  });
}

inline GradCheckCase scan_case(const GradCheckOptions& opt) {
  return run_case("scan", opt, [](Graph<double>& g, std::mt19937_64& rng) {
    Var<double> gate = param_uniform(g, "gate_pre", {2, 5, 4}, rng);
    Var<double> values = param_uniform(g, "values", {2, 5, 4}, rng);
    Var<double> c0 = param_uniform(g, "c0", {2, 4}, rng);
    ScanExec exec;
    exec.impl = ScanImpl::optimized;
    exec.workers = 2;
    return mix(g, scan(gate, values, c0, exec), rng);
  });
}

inline GradCheckCase combine_case(OutputGateMode mode,
                                  const GradCheckOptions& opt) {
  std::string name = std::string("combine_") + to_string(mode);
  return run_case(name, opt, [mode](Graph<double>& g, std::mt19937_64& rng) {
    Var<double> h2 = param_uniform(g, "h2", {2, 3, 4}, rng);
    Var<double> other = param_uniform(
        g, mode == OutputGateMode::literal ? "c3" : "c4", {2, 3, 4}, rng);
    return mix(g, combine(h2, other, other, mode), rng);
  });
}

// Whole pipeline: embedding gather, encoder, pooled head, cross entropy,
// with one padded row in the batch. cfg arrives with small dims forced.
inline GradCheckCase model_case(const std::string& name,
                                const EncoderConfig& cfg,
                                const GradCheckOptions& opt) {
  return run_case(name, opt, [&cfg](Graph<double>& g, std::mt19937_64& rng) {
    Model<double> m = init_model<double>(cfg, 9, 3, 8);
    Batch b;
    b.batch = 2;
    b.steps = 4;
    std::uniform_int_distribution<int> tok(1, 8);
    b.ids.assign(b.batch * b.steps, 0);
    for (std::size_t i = 0; i < 4; ++i) b.ids[i] = tok(rng);
    for (std::size_t i = 4; i < 6; ++i) b.ids[i] = tok(rng);
    b.mask = BatchMask::from_lengths({4, 2}, 4);
    b.labels = {0, 2};
    return model_loss(g, m, b);
  });
}

inline EncoderConfig small_rcrn_config(OutputGateMode mode) {
  EncoderConfig cfg;
  cfg.input_dim = 5;
  cfg.hidden_dim = 3;
  cfg.atom = AtomKind::lstm;
  cfg.kind = EncoderKind::rcrn;
  cfg.output_gate = mode;
  cfg.seed = 23;
  return cfg;
}

}  // namespace detail

// Checks every parameter of a model shaped like cfg (dims forced small so
// the FD sweep stays fast), embedding and head included.
inline GradCheckCase gradcheck_model(EncoderConfig cfg,
                                     const GradCheckOptions& opt = {}) {
  cfg.input_dim = 5;
  cfg.hidden_dim = 3;
  cfg.seed = 23;
  if (cfg.kind == EncoderKind::stacked_bilstm && cfg.layers > 3)
    cfg.layers = 3;
  std::string name = std::string("model_") + to_string(cfg.kind) + "_" +
                     to_string(cfg.atom);
  if (cfg.kind == EncoderKind::rcrn)
    name += std::string("_") + to_string(cfg.output_gate);
  return detail::model_case(name, cfg, opt);
}

// The fixed verification suite, cells through full model.
inline std::vector<GradCheckCase> run_gradcheck(
    const GradCheckOptions& opt = {}) {
  std::vector<GradCheckCase> out;
  out.push_back(detail::atom_case("lstm_cell", AtomKind::lstm, opt));
  out.push_back(detail::atom_case("gru_cell", AtomKind::gru, opt));
  out.push_back(detail::controller_case(opt));
  out.push_back(detail::listener_case(opt));
  out.push_back(detail::scan_case(opt));
  out.push_back(detail::combine_case(OutputGateMode::literal, opt));
  out.push_back(detail::combine_case(OutputGateMode::gated_c4, opt));
  out.push_back(detail::model_case(
      "rcrn_full_gated_c4",
      detail::small_rcrn_config(OutputGateMode::gated_c4), opt));
  out.push_back(detail::model_case(
      "rcrn_full_literal", detail::small_rcrn_config(OutputGateMode::literal),
      opt));
  return out;
}

inline bool all_pass(const std::vector<GradCheckCase>& cases) {
  for (const GradCheckCase& c : cases)
    if (!c.pass) return false;
  return !cases.empty();
}

}  // namespace rcrn
