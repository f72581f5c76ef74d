// Copyright 2026 The rcrn Authors
// SPDX-License-Identifier: Apache-2.0
//
// The element-wise gated recurrence c_t = s_t*c_{t-1} + (1-s_t)*v_t with
// s_t = sigmoid(gate_t), plus the output combine step. Two forward kernels:
// a naive time-outer loop and an optimized form that batches the sigmoid and
// runs each feature lane's recurrence independently, distributing lanes
// across worker threads. Both share scan_step() and stable_sigmoid(), so
// their outputs are bit-identical for any worker count.

#pragma once

#include <cstddef>
#include <string>
#include <thread>
#include <vector>

#include "rcrn/errors.hpp"
#include "rcrn/graph.hpp"
#include "rcrn/tensor.hpp"

namespace rcrn {

enum class ScanImpl { naive, optimized };

struct ScanExec {
  ScanImpl impl = ScanImpl::optimized;
  unsigned workers = 1;
};

// Which reading of the output combine step is used. `literal` multiplies the
// raw controller output into the listener cell state; `gated_c4` squashes the
// controller output through a sigmoid and gates the scanned state, which is
// the only reading where the scan result reaches the model output. Recorded
// in checkpoints.
enum class OutputGateMode { literal, gated_c4 };

inline std::string to_string(OutputGateMode m) {
  return m == OutputGateMode::literal ? "literal" : "gated_c4";
}

inline OutputGateMode parse_output_gate_mode(const std::string& s) {
  if (s == "literal") return OutputGateMode::literal;
  if (s == "gated_c4") return OutputGateMode::gated_c4;
  throw ConfigError("output_gate_mode must be 'literal' or 'gated_c4', got '" +
                    s + "'");
}

namespace detail {

// One recurrence step. Shared by every kernel; the single source of the
// floating-point evaluation order that makes naive and optimized bitwise
// equal.
template <typename T>
inline T scan_step(T s, T c_prev, T v) {
  return s * c_prev + (T(1) - s) * v;
}

// Sequences are laid out [R x T x F]: R independent rows (batch), T steps,
// F feature lanes. c0 is [R x F] or null for zeros.
template <typename T>
void scan_forward_naive(const T* gate, const T* value, const T* c0, T* out,
                        std::size_t R, std::size_t Tn, std::size_t F) {
  for (std::size_t r = 0; r < R; ++r) {
    for (std::size_t t = 0; t < Tn; ++t) {
      const std::size_t base = (r * Tn + t) * F;
      const T* prev = t == 0 ? (c0 ? c0 + r * F : nullptr) : out + base - F;
      for (std::size_t f = 0; f < F; ++f) {
        T s = stable_sigmoid(gate[base + f]);
        T cp = prev ? prev[f] : T(0);
        out[base + f] = scan_step(s, cp, value[base + f]);
      }
    }
  }
}

template <typename T>
void scan_forward_optimized(const T* gate, const T* value, const T* c0, T* out,
                            std::size_t R, std::size_t Tn, std::size_t F,
                            unsigned workers) {
  const std::size_t total = R * Tn * F;
  std::vector<T> sig(total);
  const std::size_t lanes = R * F;
  if (workers == 0) workers = 1;
  const unsigned nw = static_cast<unsigned>(
      std::min<std::size_t>(workers, lanes == 0 ? 1 : lanes));

  auto sig_range = [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) sig[i] = stable_sigmoid(gate[i]);
  };
  auto lane_range = [&](std::size_t lo, std::size_t hi) {
    for (std::size_t lane = lo; lane < hi; ++lane) {
      const std::size_t r = lane / F, f = lane % F;
      T c = c0 ? c0[r * F + f] : T(0);
      const std::size_t row = r * Tn * F + f;
      for (std::size_t t = 0; t < Tn; ++t) {
        const std::size_t i = row + t * F;
        c = scan_step(sig[i], c, value[i]);
        out[i] = c;
      }
    }
  };

  if (nw <= 1) {
    sig_range(0, total);
    lane_range(0, lanes);
    return;
  }
  {
    std::vector<std::thread> pool;
    const std::size_t chunk = (total + nw - 1) / nw;
    for (unsigned w = 0; w < nw; ++w) {
      std::size_t lo = std::min<std::size_t>(w * chunk, total);
      std::size_t hi = std::min<std::size_t>(lo + chunk, total);
      pool.emplace_back(sig_range, lo, hi);
    }
    for (auto& th : pool) th.join();
  }
  {
    std::vector<std::thread> pool;
    const std::size_t chunk = (lanes + nw - 1) / nw;
    for (unsigned w = 0; w < nw; ++w) {
      std::size_t lo = std::min<std::size_t>(w * chunk, lanes);
      std::size_t hi = std::min<std::size_t>(lo + chunk, lanes);
      pool.emplace_back(lane_range, lo, hi);
    }
    for (auto& th : pool) th.join();
  }
}

// Reverse sweep. dgate/dvalue/dc0 accumulate (+=) into caller buffers;
// dc0 may be null.
template <typename T>
void scan_backward(const T* gate, const T* value, const T* c0, const T* out,
                   const T* gout, T* dgate, T* dvalue, T* dc0, std::size_t R,
                   std::size_t Tn, std::size_t F) {
  for (std::size_t r = 0; r < R; ++r) {
    for (std::size_t f = 0; f < F; ++f) {
      T gc = 0;
      const std::size_t row = r * Tn * F + f;
      for (std::size_t t = Tn; t-- > 0;) {
        const std::size_t i = row + t * F;
        gc += gout[i];
        T s = stable_sigmoid(gate[i]);
        T cp = t == 0 ? (c0 ? c0[r * F + f] : T(0)) : out[i - F];
        dvalue[i] += gc * (T(1) - s);
        dgate[i] += gc * (cp - value[i]) * s * (T(1) - s);
        gc *= s;
      }
      if (dc0) dc0[r * F + f] += gc;
    }
  }
}

template <typename T>
void check_scan_shapes(const Tensor<T>& gate, const Tensor<T>& value,
                       const Tensor<T>& c0, std::size_t& R, std::size_t& Tn,
                       std::size_t& F) {
  check_same_shape(gate.shape(), value.shape(), "scan");
  if (gate.rank() == 2) {
    R = 1;
    Tn = gate.extent(0);
    F = gate.extent(1);
    if (c0.rank() != 1 || c0.extent(0) != F)
      throw DimError("scan: c0 " + shape_str(c0.shape()) +
                     " does not match feature dim of " +
                     shape_str(gate.shape()));
  } else if (gate.rank() == 3) {
    R = gate.extent(0);
    Tn = gate.extent(1);
    F = gate.extent(2);
    if (c0.rank() != 2 || c0.extent(0) != R || c0.extent(1) != F)
      throw DimError("scan: c0 " + shape_str(c0.shape()) +
                     " does not match rows/features of " +
                     shape_str(gate.shape()));
  } else {
    throw DimError("scan: expected rank 2 or 3 sequence, got " +
                   shape_str(gate.shape()));
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Value-level surface
// ---------------------------------------------------------------------------

template <typename T>
struct ScanInput {
  Tensor<T> gate_seq;   // [T x d]: pre-sigmoid gate signal over time
  Tensor<T> value_seq;  // [T x d]: candidate values over time
  Tensor<T> c0;         // [d]: initial state
};

template <typename T>
struct ScanOutput {
  Tensor<T> c4_seq;  // [T x d]
};

template <typename T>
ScanOutput<T> scan_naive(const ScanInput<T>& in) {
  std::size_t R, Tn, F;
  detail::check_scan_shapes(in.gate_seq, in.value_seq, in.c0, R, Tn, F);
  Tensor<T> out(in.gate_seq.shape());
  detail::scan_forward_naive(in.gate_seq.data(), in.value_seq.data(),
                             in.c0.data(), out.unshared_data(), R, Tn, F);
  return {std::move(out)};
}

template <typename T>
ScanOutput<T> scan_optimized(const ScanInput<T>& in, unsigned workers = 1) {
  std::size_t R, Tn, F;
  detail::check_scan_shapes(in.gate_seq, in.value_seq, in.c0, R, Tn, F);
  Tensor<T> out(in.gate_seq.shape());
  detail::scan_forward_optimized(in.gate_seq.data(), in.value_seq.data(),
                                 in.c0.data(), out.unshared_data(), R, Tn, F,
                                 workers);
  return {std::move(out)};
}

// Output combine step over whole sequences, value level.
template <typename T>
Tensor<T> combine_output(const Tensor<T>& h2_seq, const Tensor<T>& c3_seq,
                         const Tensor<T>& c4_seq, OutputGateMode mode) {
  check_same_shape(h2_seq.shape(), c3_seq.shape(), "combine_output");
  check_same_shape(h2_seq.shape(), c4_seq.shape(), "combine_output");
  Tensor<T> out(h2_seq.shape());
  T* o = out.unshared_data();
  const T* h2 = h2_seq.data();
  const T* c3 = c3_seq.data();
  const T* c4 = c4_seq.data();
  for (std::size_t i = 0; i < out.size(); ++i)
    o[i] = mode == OutputGateMode::literal ? h2[i] * c3[i]
                                           : stable_sigmoid(h2[i]) * c4[i];
  return out;
}

// ---------------------------------------------------------------------------
// Graph ops
// ---------------------------------------------------------------------------

// Differentiable scan node. gate_pre and values are [R x T x F] (or [T x F]),
// c0 is [R x F] (or [F]). The execution strategy affects timing only, never
// the bits.
template <typename T>
Var<T> scan(Var<T> gate_pre, Var<T> values, Var<T> c0, ScanExec exec = {}) {
  Graph<T>& g = detail::same_graph(gate_pre, values);
  detail::same_graph(gate_pre, c0);
  return g.make_node(
      {gate_pre.id, values.id, c0.id},
      [exec](Graph<T>& g, const auto& p) {
        const Tensor<T>& gate = g.value(p[0]);
        const Tensor<T>& val = g.value(p[1]);
        const Tensor<T>& c0t = g.value(p[2]);
        std::size_t R, Tn, F;
        detail::check_scan_shapes(gate, val, c0t, R, Tn, F);
        Tensor<T> out(gate.shape());
        if (exec.impl == ScanImpl::naive)
          detail::scan_forward_naive(gate.data(), val.data(), c0t.data(),
                                     out.unshared_data(), R, Tn, F);
        else
          detail::scan_forward_optimized(gate.data(), val.data(), c0t.data(),
                                         out.unshared_data(), R, Tn, F,
                                         exec.workers);
        return out;
      },
      [](Graph<T>& g, std::uint32_t self) {
        const auto& ps = g.parents(self);
        const Tensor<T>& gate = g.value(ps[0]);
        const Tensor<T>& val = g.value(ps[1]);
        const Tensor<T>& c0t = g.value(ps[2]);
        std::size_t R, Tn, F;
        detail::check_scan_shapes(gate, val, c0t, R, Tn, F);
        bool ng0 = g.needs_grad(ps[0]);
        bool ng1 = g.needs_grad(ps[1]);
        bool ng2 = g.needs_grad(ps[2]);
        if (!ng0 && !ng1 && !ng2) return;
        // The reverse recurrence couples all three inputs, so scratch
        // buffers stand in for any parent that does not need its gradient.
        Tensor<T> scratch_g = ng0 ? Tensor<T>() : Tensor<T>::zeros(gate.shape());
        Tensor<T> scratch_v = ng1 ? Tensor<T>() : Tensor<T>::zeros(val.shape());
        T* dgate = ng0 ? g.grad_buffer(ps[0]).unshared_data()
                       : scratch_g.unshared_data();
        T* dval = ng1 ? g.grad_buffer(ps[1]).unshared_data()
                      : scratch_v.unshared_data();
        T* dc0 = ng2 ? g.grad_buffer(ps[2]).unshared_data() : nullptr;
        detail::scan_backward(gate.data(), val.data(), c0t.data(),
                              g.value(self).data(), g.grad(self).data(), dgate,
                              dval, dc0, R, Tn, F);
      });
}

// Differentiable combine step, assembled from primitive ops.
template <typename T>
Var<T> combine(Var<T> h2_seq, Var<T> mix_seq, Var<T> c4_seq,
               OutputGateMode mode) {
  if (mode == OutputGateMode::literal) return mul(h2_seq, mix_seq);
  return mul(sigmoid(h2_seq), c4_seq);
}

}  // namespace rcrn
