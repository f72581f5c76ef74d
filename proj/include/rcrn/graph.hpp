// Copyright 2026 The rcrn Authors
// SPDX-License-Identifier: Apache-2.0
//
// Define-by-run autodiff tape. Every operation appends one node holding the
// forward value, the parent ids, a backward closure that accumulates into the
// parents' gradient buffers, and a forward closure that can recompute the
// value from the parents (used by replay() and the finite-difference check).
// Nodes are created in topological order, so backward is a reverse sweep and
// replay is a forward sweep; no explicit sort is ever needed.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "rcrn/errors.hpp"
#include "rcrn/gemm.hpp"
#include "rcrn/tensor.hpp"

namespace rcrn {

template <typename T>
class Graph;

// Lightweight handle to a node in a Graph.
template <typename T>
struct Var {
  Graph<T>* graph = nullptr;
  std::uint32_t id = 0;

  bool valid() const { return graph != nullptr; }
  const Tensor<T>& value() const;
  const Shape& shape() const { return value().shape(); }
};

template <typename T>
using GradientMap = std::map<std::string, Tensor<T>>;

template <typename T>
class Graph {
 public:
  using NodeId = std::uint32_t;
  using BackwardFn = std::function<void(Graph&, NodeId)>;
  using ForwardFn = std::function<Tensor<T>(Graph&, const std::vector<NodeId>&)>;

  Graph() = default;
  explicit Graph(bool recording) : recording_(recording) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool recording() const { return recording_; }

  Var<T> input(Tensor<T> v) {
    return append(std::move(v), {}, nullptr, nullptr, {}, false);
  }

  Var<T> param(const std::string& name, Tensor<T> v) {
    if (name.empty()) throw ContractError("param: name must be nonempty");
    for (const Node& n : nodes_) {
      if (n.param_name == name)
        throw ContractError("param: duplicate name '" + name + "'");
    }
    return append(std::move(v), {}, nullptr, nullptr, name, true);
  }

  // Internal node factory used by the op builders below (and by the scan op).
  // The value is computed by calling `fwd` once, so replay is bit-exact by
  // construction.
  Var<T> make_node(std::vector<NodeId> parents, ForwardFn fwd, BackwardFn bwd) {
    bool ng = false;
    for (NodeId p : parents) ng = ng || nodes_[p].needs_grad;
    Tensor<T> v = fwd(*this, parents);
    return append(std::move(v), std::move(parents), std::move(fwd),
                  recording_ ? std::move(bwd) : nullptr, {}, ng);
  }

  std::size_t node_count() const { return nodes_.size(); }

  const Tensor<T>& value(NodeId id) const { return nodes_[id].value; }

  const std::vector<NodeId>& parents(NodeId id) const {
    return nodes_[id].parents;
  }

  bool needs_grad(NodeId id) const { return nodes_[id].needs_grad; }

  bool has_grad(NodeId id) const { return !nodes_[id].grad.empty(); }

  const Tensor<T>& grad(NodeId id) const { return nodes_[id].grad; }

  Tensor<T>& grad_buffer(NodeId id) {
    Node& n = nodes_[id];
    if (n.grad.empty()) n.grad = Tensor<T>::zeros(n.value.shape());
    return n.grad;
  }

  // Reverse-mode sweep from a scalar loss. Gradients of named parameter
  // leaves are returned; parameters unreachable from the loss get zeros.
  GradientMap<T> backward(Var<T> loss) {
    if (loss.graph != this) throw ContractError("backward: foreign var");
    if (!recording_) throw ContractError("backward: graph is not recording");
    if (value(loss.id).size() != 1)
      throw ContractError("backward: loss must be scalar, got shape " +
                          shape_str(value(loss.id).shape()));
    for (Node& n : nodes_) n.grad = Tensor<T>();
    grad_buffer(loss.id) = Tensor<T>::full(value(loss.id).shape(), T(1));
    for (std::uint64_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[static_cast<NodeId>(i)];
      if (!n.grad.empty() && n.backward) n.backward(*this, static_cast<NodeId>(i));
    }
    GradientMap<T> out;
    for (const Node& n : nodes_) {
      if (n.param_name.empty()) continue;
      out.emplace(n.param_name, n.grad.empty()
                                    ? Tensor<T>::zeros(n.value.shape())
                                    : n.grad);
    }
    return out;
  }

  // Recomputes every non-leaf value from the leaves, in recording order.
  void replay() {
    for (NodeId i = 0; i < nodes_.size(); ++i) {
      Node& n = nodes_[i];
      if (n.forward) n.value = n.forward(*this, n.parents);
    }
  }

  // Overwrites one coordinate of a leaf value; returns the old value.
  T poke_leaf(NodeId id, std::size_t flat, T v) {
    Node& n = nodes_[id];
    if (n.forward) throw ContractError("poke_leaf: not a leaf");
    T* p = n.value.unshared_data();
    T old = p[flat];
    p[flat] = v;
    return old;
  }

  std::vector<std::pair<std::string, NodeId>> param_leaves() const {
    std::vector<std::pair<std::string, NodeId>> out;
    for (NodeId i = 0; i < nodes_.size(); ++i)
      if (!nodes_[i].param_name.empty()) out.emplace_back(nodes_[i].param_name, i);
    return out;
  }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    std::vector<NodeId> parents;
    ForwardFn forward;    // null for leaves
    BackwardFn backward;  // null for leaves and non-recording graphs
    std::string param_name;
    bool needs_grad = false;
  };

  Var<T> append(Tensor<T> value, std::vector<NodeId> parents, ForwardFn fwd,
                BackwardFn bwd, std::string name, bool needs_grad) {
    Node n;
    n.value = std::move(value);
    n.parents = std::move(parents);
    n.forward = std::move(fwd);
    n.backward = std::move(bwd);
    n.param_name = std::move(name);
    n.needs_grad = needs_grad;
    nodes_.push_back(std::move(n));
    return Var<T>{this, static_cast<NodeId>(nodes_.size() - 1)};
  }

  std::vector<Node> nodes_;
  bool recording_ = true;
};

template <typename T>
const Tensor<T>& Var<T>::value() const {
  return graph->value(id);
}

namespace detail {

template <typename T>
Graph<T>& same_graph(Var<T> a, Var<T> b) {
  if (a.graph != b.graph) throw ContractError("op: vars from different graphs");
  return *a.graph;
}

template <typename T, typename F>
Tensor<T> map1(const Tensor<T>& x, F f) {
  Tensor<T> out(x.shape());
  T* o = out.unshared_data();
  const T* p = x.data();
  for (std::size_t i = 0; i < x.size(); ++i) o[i] = f(p[i]);
  return out;
}

template <typename T, typename F>
Tensor<T> map2(const Tensor<T>& a, const Tensor<T>& b, const char* op, F f) {
  check_same_shape(a.shape(), b.shape(), op);
  Tensor<T> out(a.shape());
  T* o = out.unshared_data();
  const T* pa = a.data();
  const T* pb = b.data();
  for (std::size_t i = 0; i < a.size(); ++i) o[i] = f(pa[i], pb[i]);
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise ops
// ---------------------------------------------------------------------------

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  Graph<T>& g = detail::same_graph(a, b);
  return g.make_node(
      {a.id, b.id},
      [](Graph<T>& g, const auto& p) {
        return detail::map2(g.value(p[0]), g.value(p[1]), "add",
                            [](T x, T y) { return x + y; });
      },
      [](Graph<T>& g, std::uint32_t self) {
        const Tensor<T>& go = g.grad(self);
        for (int k = 0; k < 2; ++k) {
          std::uint32_t p = g.parents(self)[k];
          if (!g.needs_grad(p)) continue;
          T* d = g.grad_buffer(p).unshared_data();
          const T* s = go.data();
          for (std::size_t i = 0; i < go.size(); ++i) d[i] += s[i];
        }
      });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  Graph<T>& g = detail::same_graph(a, b);
  return g.make_node(
      {a.id, b.id},
      [](Graph<T>& g, const auto& p) {
        return detail::map2(g.value(p[0]), g.value(p[1]), "sub",
                            [](T x, T y) { return x - y; });
      },
      [](Graph<T>& g, std::uint32_t self) {
        const Tensor<T>& go = g.grad(self);
        const auto& ps = g.parents(self);
        if (g.needs_grad(ps[0])) {
          T* d = g.grad_buffer(ps[0]).unshared_data();
          const T* s = go.data();
          for (std::size_t i = 0; i < go.size(); ++i) d[i] += s[i];
        }
        if (g.needs_grad(ps[1])) {
          T* d = g.grad_buffer(ps[1]).unshared_data();
          const T* s = go.data();
          for (std::size_t i = 0; i < go.size(); ++i) d[i] -= s[i];
        }
      });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  Graph<T>& g = detail::same_graph(a, b);
  return g.make_node(
      {a.id, b.id},
      [](Graph<T>& g, const auto& p) {
        return detail::map2(g.value(p[0]), g.value(p[1]), "mul",
                            [](T x, T y) { return x * y; });
      },
      [](Graph<T>& g, std::uint32_t self) {
        const Tensor<T>& go = g.grad(self);
        const auto& ps = g.parents(self);
        for (int k = 0; k < 2; ++k) {
          if (!g.needs_grad(ps[k])) continue;
          const T* other = g.value(ps[1 - k]).data();
          T* d = g.grad_buffer(ps[k]).unshared_data();
          const T* s = go.data();
          for (std::size_t i = 0; i < go.size(); ++i) d[i] += s[i] * other[i];
        }
      });
}

template <typename T>
Var<T> one_minus(Var<T> a) {
  Graph<T>& g = *a.graph;
  return g.make_node(
      {a.id},
      [](Graph<T>& g, const auto& p) {
        return detail::map1(g.value(p[0]), [](T x) { return T(1) - x; });
      },
      [](Graph<T>& g, std::uint32_t self) {
        std::uint32_t p = g.parents(self)[0];
        if (!g.needs_grad(p)) return;
        const Tensor<T>& go = g.grad(self);
        T* d = g.grad_buffer(p).unshared_data();
        const T* s = go.data();
        for (std::size_t i = 0; i < go.size(); ++i) d[i] -= s[i];
      });
}

template <typename T>
Var<T> scalar_mul(Var<T> a, double s) {
  Graph<T>& g = *a.graph;
  return g.make_node(
      {a.id},
      [s](Graph<T>& g, const auto& p) {
        return detail::map1(g.value(p[0]),
                            [s](T x) { return static_cast<T>(s) * x; });
      },
      [s](Graph<T>& g, std::uint32_t self) {
        std::uint32_t p = g.parents(self)[0];
        if (!g.needs_grad(p)) return;
        const Tensor<T>& go = g.grad(self);
        T* d = g.grad_buffer(p).unshared_data();
        const T* gp = go.data();
        for (std::size_t i = 0; i < go.size(); ++i)
          d[i] += static_cast<T>(s) * gp[i];
      });
}

template <typename T>
Var<T> sigmoid(Var<T> a) {
  Graph<T>& g = *a.graph;
  return g.make_node(
      {a.id},
      [](Graph<T>& g, const auto& p) {
        return detail::map1(g.value(p[0]), [](T x) { return stable_sigmoid(x); });
      },
      [](Graph<T>& g, std::uint32_t self) {
        std::uint32_t p = g.parents(self)[0];
        if (!g.needs_grad(p)) return;
        const Tensor<T>& go = g.grad(self);
        const T* y = g.value(self).data();
        T* d = g.grad_buffer(p).unshared_data();
        const T* s = go.data();
        for (std::size_t i = 0; i < go.size(); ++i)
          d[i] += s[i] * y[i] * (T(1) - y[i]);
      });
}

template <typename T>
Var<T> tanh(Var<T> a) {
  Graph<T>& g = *a.graph;
  return g.make_node(
      {a.id},
      [](Graph<T>& g, const auto& p) {
        return detail::map1(g.value(p[0]), [](T x) { return std::tanh(x); });
      },
      [](Graph<T>& g, std::uint32_t self) {
        std::uint32_t p = g.parents(self)[0];
        if (!g.needs_grad(p)) return;
        const Tensor<T>& go = g.grad(self);
        const T* y = g.value(self).data();
        T* d = g.grad_buffer(p).unshared_data();
        const T* s = go.data();
        for (std::size_t i = 0; i < go.size(); ++i)
          d[i] += s[i] * (T(1) - y[i] * y[i]);
      });
}

template <typename T>
Var<T> relu(Var<T> a) {
  Graph<T>& g = *a.graph;
  return g.make_node(
      {a.id},
      [](Graph<T>& g, const auto& p) {
        return detail::map1(g.value(p[0]),
                            [](T x) { return x > T(0) ? x : T(0); });
      },
      [](Graph<T>& g, std::uint32_t self) {
        std::uint32_t p = g.parents(self)[0];
        if (!g.needs_grad(p)) return;
        const Tensor<T>& go = g.grad(self);
        const T* x = g.value(p).data();
        T* d = g.grad_buffer(p).unshared_data();
        const T* s = go.data();
        for (std::size_t i = 0; i < go.size(); ++i)
          if (x[i] > T(0)) d[i] += s[i];
      });
}

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

namespace detail {

template <typename T>
void require_rank2(const Tensor<T>& t, const char* op) {
  if (t.rank() != 2)
    throw DimError(std::string(op) + ": expected rank-2 tensor, got " +
                   shape_str(t.shape()));
}

}  // namespace detail

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  Graph<T>& g = detail::same_graph(a, b);
  return g.make_node(
      {a.id, b.id},
      [](Graph<T>& g, const auto& p) {
        const Tensor<T>& A = g.value(p[0]);
        const Tensor<T>& B = g.value(p[1]);
        detail::require_rank2(A, "matmul");
        detail::require_rank2(B, "matmul");
        if (A.extent(1) != B.extent(0))
          throw DimError("matmul: inner extents disagree " +
                         shape_str(A.shape()) + " vs " + shape_str(B.shape()));
        Tensor<T> out({A.extent(0), B.extent(1)});
        detail::gemm(false, false, A.extent(0), B.extent(1), A.extent(1),
                     A.data(), B.data(), out.unshared_data(), false);
        return out;
      },
      [](Graph<T>& g, std::uint32_t self) {
        const auto& ps = g.parents(self);
        const Tensor<T>& A = g.value(ps[0]);
        const Tensor<T>& B = g.value(ps[1]);
        const Tensor<T>& G = g.grad(self);
        std::size_t m = A.extent(0), k = A.extent(1), n = B.extent(1);
        if (g.needs_grad(ps[0]))
          detail::gemm(false, true, m, k, n, G.data(), B.data(),
                       g.grad_buffer(ps[0]).unshared_data(), true);
        if (g.needs_grad(ps[1]))
          detail::gemm(true, false, k, n, m, A.data(), G.data(),
                       g.grad_buffer(ps[1]).unshared_data(), true);
      });
}

// a (m*k) times b-transpose (b is n*k); the natural orientation for cell
// weights stored as [out_dim x in_dim].
template <typename T>
Var<T> matmul_nt(Var<T> a, Var<T> b) {
  Graph<T>& g = detail::same_graph(a, b);
  return g.make_node(
      {a.id, b.id},
      [](Graph<T>& g, const auto& p) {
        const Tensor<T>& A = g.value(p[0]);
        const Tensor<T>& B = g.value(p[1]);
        detail::require_rank2(A, "matmul_nt");
        detail::require_rank2(B, "matmul_nt");
        if (A.extent(1) != B.extent(1))
          throw DimError("matmul_nt: inner extents disagree " +
                         shape_str(A.shape()) + " vs " + shape_str(B.shape()));
        Tensor<T> out({A.extent(0), B.extent(0)});
        detail::gemm(false, true, A.extent(0), B.extent(0), A.extent(1),
                     A.data(), B.data(), out.unshared_data(), false);
        return out;
      },
      [](Graph<T>& g, std::uint32_t self) {
        const auto& ps = g.parents(self);
        const Tensor<T>& A = g.value(ps[0]);
        const Tensor<T>& B = g.value(ps[1]);
        const Tensor<T>& G = g.grad(self);
        std::size_t m = A.extent(0), k = A.extent(1), n = B.extent(0);
        if (g.needs_grad(ps[0]))
          detail::gemm(false, false, m, k, n, G.data(), B.data(),
                       g.grad_buffer(ps[0]).unshared_data(), true);
        if (g.needs_grad(ps[1]))
          detail::gemm(true, false, n, k, m, G.data(), A.data(),
                       g.grad_buffer(ps[1]).unshared_data(), true);
      });
}

// Adds a length-C bias vector to every row of an R*C matrix.
template <typename T>
Var<T> add_bias(Var<T> mat, Var<T> bias) {
  Graph<T>& g = detail::same_graph(mat, bias);
  return g.make_node(
      {mat.id, bias.id},
      [](Graph<T>& g, const auto& p) {
        const Tensor<T>& M = g.value(p[0]);
        const Tensor<T>& b = g.value(p[1]);
        detail::require_rank2(M, "add_bias");
        if (b.rank() != 1 || b.extent(0) != M.extent(1))
          throw DimError("add_bias: bias " + shape_str(b.shape()) +
                         " does not match matrix " + shape_str(M.shape()));
        Tensor<T> out(M.shape());
        T* o = out.unshared_data();
        const T* m = M.data();
        const T* bv = b.data();
        std::size_t R = M.extent(0), C = M.extent(1);
        for (std::size_t r = 0; r < R; ++r)
          for (std::size_t c = 0; c < C; ++c) o[r * C + c] = m[r * C + c] + bv[c];
        return out;
      },
      [](Graph<T>& g, std::uint32_t self) {
        const auto& ps = g.parents(self);
        const Tensor<T>& G = g.grad(self);
        std::size_t R = G.extent(0), C = G.extent(1);
        if (g.needs_grad(ps[0])) {
          T* d = g.grad_buffer(ps[0]).unshared_data();
          const T* s = G.data();
          for (std::size_t i = 0; i < G.size(); ++i) d[i] += s[i];
        }
        if (g.needs_grad(ps[1])) {
          T* d = g.grad_buffer(ps[1]).unshared_data();
          const T* s = G.data();
          for (std::size_t r = 0; r < R; ++r)
            for (std::size_t c = 0; c < C; ++c) d[c] += s[r * C + c];
        }
      });
}

// Fused gate pre-activation: x*W' + h*U' + bias rows. One node instead of
// five keeps recurrent graphs compact.
template <typename T>
Var<T> affine_nt(Var<T> x, Var<T> w, Var<T> h, Var<T> u, Var<T> b) {
  Graph<T>& g = *x.graph;
  return g.make_node(
      {x.id, w.id, h.id, u.id, b.id},
      [](Graph<T>& g, const auto& p) {
        const Tensor<T>& X = g.value(p[0]);
        const Tensor<T>& W = g.value(p[1]);
        const Tensor<T>& H = g.value(p[2]);
        const Tensor<T>& U = g.value(p[3]);
        const Tensor<T>& B = g.value(p[4]);
        detail::require_rank2(X, "affine_nt");
        if (X.extent(1) != W.extent(1) || H.extent(1) != U.extent(1) ||
            W.extent(0) != U.extent(0) || B.extent(0) != W.extent(0) ||
            X.extent(0) != H.extent(0))
          throw DimError("affine_nt: inconsistent shapes x" +
                         shape_str(X.shape()) + " W" + shape_str(W.shape()) +
                         " h" + shape_str(H.shape()) + " U" +
                         shape_str(U.shape()) + " b" + shape_str(B.shape()));
        std::size_t R = X.extent(0), C = W.extent(0);
        Tensor<T> out({R, C});
        detail::gemm(false, true, R, C, X.extent(1), X.data(), W.data(),
                     out.unshared_data(), false);
        detail::gemm(false, true, R, C, H.extent(1), H.data(), U.data(),
                     out.unshared_data(), true);
        T* o = out.unshared_data();
        const T* bv = B.data();
        for (std::size_t r = 0; r < R; ++r)
          for (std::size_t c = 0; c < C; ++c) o[r * C + c] += bv[c];
        return out;
      },
      [](Graph<T>& g, std::uint32_t self) {
        const auto& ps = g.parents(self);
        const Tensor<T>& X = g.value(ps[0]);
        const Tensor<T>& W = g.value(ps[1]);
        const Tensor<T>& H = g.value(ps[2]);
        const Tensor<T>& U = g.value(ps[3]);
        const Tensor<T>& G = g.grad(self);
        std::size_t R = G.extent(0), C = G.extent(1);
        if (g.needs_grad(ps[0]))
          detail::gemm(false, false, R, X.extent(1), C, G.data(), W.data(),
                       g.grad_buffer(ps[0]).unshared_data(), true);
        if (g.needs_grad(ps[1]))
          detail::gemm(true, false, C, X.extent(1), R, G.data(), X.data(),
                       g.grad_buffer(ps[1]).unshared_data(), true);
        if (g.needs_grad(ps[2]))
          detail::gemm(false, false, R, H.extent(1), C, G.data(), U.data(),
                       g.grad_buffer(ps[2]).unshared_data(), true);
        if (g.needs_grad(ps[3]))
          detail::gemm(true, false, C, H.extent(1), R, G.data(), H.data(),
                       g.grad_buffer(ps[3]).unshared_data(), true);
        if (g.needs_grad(ps[4])) {
          T* d = g.grad_buffer(ps[4]).unshared_data();
          const T* s = G.data();
          for (std::size_t r = 0; r < R; ++r)
            for (std::size_t c = 0; c < C; ++c) d[c] += s[r * C + c];
        }
      });
}

// ---------------------------------------------------------------------------
// Structural ops
// ---------------------------------------------------------------------------

namespace detail {

struct ConcatSpec {
  std::size_t axis;
  std::size_t outer, inner;
  std::vector<std::size_t> axis_extents;
};

template <typename T>
inline ConcatSpec concat_spec(const std::vector<const Tensor<T>*>& parts,
                              std::size_t axis) {
  const Shape& ref = parts[0]->shape();
  if (axis >= ref.size()) throw DimError("concat: axis out of range");
  ConcatSpec sp;
  sp.axis = axis;
  sp.outer = 1;
  sp.inner = 1;
  for (std::size_t i = 0; i < axis; ++i) sp.outer *= ref[i];
  for (std::size_t i = axis + 1; i < ref.size(); ++i) sp.inner *= ref[i];
  for (const Tensor<T>* p : parts) {
    const Shape& s = p->shape();
    if (s.size() != ref.size())
      throw DimError("concat: rank mismatch " + shape_str(s) + " vs " +
                     shape_str(ref));
    for (std::size_t i = 0; i < ref.size(); ++i)
      if (i != axis && s[i] != ref[i])
        throw DimError("concat: extent mismatch off axis " + shape_str(s) +
                       " vs " + shape_str(ref));
    sp.axis_extents.push_back(s[axis]);
  }
  return sp;
}

}  // namespace detail

template <typename T>
Var<T> concat(const std::vector<Var<T>>& parts, std::size_t axis) {
  if (parts.empty()) throw ContractError("concat: no parts");
  Graph<T>& g = *parts[0].graph;
  std::vector<std::uint32_t> ids;
  for (Var<T> v : parts) {
    detail::same_graph(parts[0], v);
    ids.push_back(v.id);
  }
  return g.make_node(
      std::move(ids),
      [axis](Graph<T>& g, const auto& p) {
        std::vector<const Tensor<T>*> parts;
        for (auto id : p) parts.push_back(&g.value(id));
        auto sp = detail::concat_spec(parts, axis);
        std::size_t total_axis = 0;
        for (std::size_t e : sp.axis_extents) total_axis += e;
        Shape out_shape = parts[0]->shape();
        out_shape[axis] = total_axis;
        Tensor<T> out(out_shape);
        T* o = out.unshared_data();
        for (std::size_t ou = 0; ou < sp.outer; ++ou) {
          std::size_t off = ou * total_axis * sp.inner;
          for (std::size_t k = 0; k < parts.size(); ++k) {
            const T* src = parts[k]->data() + ou * sp.axis_extents[k] * sp.inner;
            std::size_t block = sp.axis_extents[k] * sp.inner;
            std::copy(src, src + block, o + off);
            off += block;
          }
        }
        return out;
      },
      [axis](Graph<T>& g, std::uint32_t self) {
        const auto& ps = g.parents(self);
        std::vector<const Tensor<T>*> parts;
        for (auto id : ps) parts.push_back(&g.value(id));
        auto sp = detail::concat_spec(parts, axis);
        const Tensor<T>& G = g.grad(self);
        std::size_t total_axis = G.extent(axis);
        for (std::size_t ou = 0; ou < sp.outer; ++ou) {
          std::size_t off = ou * total_axis * sp.inner;
          for (std::size_t k = 0; k < ps.size(); ++k) {
            std::size_t block = sp.axis_extents[k] * sp.inner;
            if (g.needs_grad(ps[k])) {
              T* d = g.grad_buffer(ps[k]).unshared_data() +
                     ou * sp.axis_extents[k] * sp.inner;
              const T* s = G.data() + off;
              for (std::size_t i = 0; i < block; ++i) d[i] += s[i];
            }
            off += block;
          }
        }
      });
}

template <typename T>
Var<T> slice(Var<T> v, std::size_t axis, std::size_t start, std::size_t len) {
  Graph<T>& g = *v.graph;
  return g.make_node(
      {v.id},
      [axis, start, len](Graph<T>& g, const auto& p) {
        const Tensor<T>& X = g.value(p[0]);
        if (axis >= X.rank() || start + len > X.extent(axis))
          throw DimError("slice: range [" + std::to_string(start) + "," +
                         std::to_string(start + len) + ") exceeds axis of " +
                         shape_str(X.shape()));
        std::size_t outer = 1, inner = 1;
        for (std::size_t i = 0; i < axis; ++i) outer *= X.extent(i);
        for (std::size_t i = axis + 1; i < X.rank(); ++i) inner *= X.extent(i);
        Shape out_shape = X.shape();
        out_shape[axis] = len;
        Tensor<T> out(out_shape);
        T* o = out.unshared_data();
        std::size_t ax = X.extent(axis);
        for (std::size_t ou = 0; ou < outer; ++ou) {
          const T* src = X.data() + (ou * ax + start) * inner;
          std::copy(src, src + len * inner, o + ou * len * inner);
        }
        return out;
      },
      [axis, start, len](Graph<T>& g, std::uint32_t self) {
        std::uint32_t p = g.parents(self)[0];
        if (!g.needs_grad(p)) return;
        const Tensor<T>& X = g.value(p);
        const Tensor<T>& G = g.grad(self);
        std::size_t outer = 1, inner = 1;
        for (std::size_t i = 0; i < axis; ++i) outer *= X.extent(i);
        for (std::size_t i = axis + 1; i < X.rank(); ++i) inner *= X.extent(i);
        std::size_t ax = X.extent(axis);
        T* d = g.grad_buffer(p).unshared_data();
        for (std::size_t ou = 0; ou < outer; ++ou) {
          T* dst = d + (ou * ax + start) * inner;
          const T* s = G.data() + ou * len * inner;
          for (std::size_t i = 0; i < len * inner; ++i) dst[i] += s[i];
        }
      });
}

// Stacks T step tensors of shape [R x C] into one [R x T x C] tensor.
template <typename T>
Var<T> stack_steps(const std::vector<Var<T>>& steps) {
  if (steps.empty()) throw ContractError("stack_steps: no steps");
  Graph<T>& g = *steps[0].graph;
  std::vector<std::uint32_t> ids;
  for (Var<T> v : steps) {
    detail::same_graph(steps[0], v);
    ids.push_back(v.id);
  }
  return g.make_node(
      std::move(ids),
      [](Graph<T>& g, const auto& p) {
        const Tensor<T>& first = g.value(p[0]);
        detail::require_rank2(first, "stack_steps");
        std::size_t R = first.extent(0), C = first.extent(1), Tn = p.size();
        Tensor<T> out({R, Tn, C});
        T* o = out.unshared_data();
        for (std::size_t t = 0; t < Tn; ++t) {
          const Tensor<T>& st = g.value(p[t]);
          check_same_shape(st.shape(), first.shape(), "stack_steps");
          const T* s = st.data();
          for (std::size_t r = 0; r < R; ++r)
            std::copy(s + r * C, s + (r + 1) * C, o + (r * Tn + t) * C);
        }
        return out;
      },
      [](Graph<T>& g, std::uint32_t self) {
        const auto& ps = g.parents(self);
        const Tensor<T>& G = g.grad(self);
        std::size_t R = G.extent(0), Tn = G.extent(1), C = G.extent(2);
        for (std::size_t t = 0; t < Tn; ++t) {
          if (!g.needs_grad(ps[t])) continue;
          T* d = g.grad_buffer(ps[t]).unshared_data();
          const T* s = G.data();
          for (std::size_t r = 0; r < R; ++r)
            for (std::size_t c = 0; c < C; ++c)
              d[r * C + c] += s[(r * Tn + t) * C + c];
        }
      });
}

// Embedding lookup: rows of `table` selected by `ids`.
template <typename T>
Var<T> gather_rows(Var<T> table, std::shared_ptr<const std::vector<int>> ids) {
  Graph<T>& g = *table.graph;
  return g.make_node(
      {table.id},
      [ids](Graph<T>& g, const auto& p) {
        const Tensor<T>& Tb = g.value(p[0]);
        detail::require_rank2(Tb, "gather_rows");
        std::size_t V = Tb.extent(0), E = Tb.extent(1);
        Tensor<T> out({ids->size(), E});
        T* o = out.unshared_data();
        for (std::size_t b = 0; b < ids->size(); ++b) {
          int id = (*ids)[b];
          if (id < 0 || static_cast<std::size_t>(id) >= V)
            throw DataError("gather_rows: id " + std::to_string(id) +
                            " out of range for table " + shape_str(Tb.shape()));
          std::copy(Tb.data() + id * E, Tb.data() + (id + 1) * E, o + b * E);
        }
        return out;
      },
      [ids](Graph<T>& g, std::uint32_t self) {
        std::uint32_t p = g.parents(self)[0];
        if (!g.needs_grad(p)) return;
        const Tensor<T>& G = g.grad(self);
        std::size_t E = G.extent(1);
        T* d = g.grad_buffer(p).unshared_data();
        const T* s = G.data();
        for (std::size_t b = 0; b < ids->size(); ++b) {
          std::size_t row = static_cast<std::size_t>((*ids)[b]);
          for (std::size_t e = 0; e < E; ++e) d[row * E + e] += s[b * E + e];
        }
      });
}

// ---------------------------------------------------------------------------
// Reductions and classification ops
// ---------------------------------------------------------------------------

template <typename T>
Var<T> sum(Var<T> a) {
  Graph<T>& g = *a.graph;
  return g.make_node(
      {a.id},
      [](Graph<T>& g, const auto& p) {
        const Tensor<T>& X = g.value(p[0]);
        T acc = 0;
        const T* x = X.data();
        for (std::size_t i = 0; i < X.size(); ++i) acc += x[i];
        return Tensor<T>::scalar(acc);
      },
      [](Graph<T>& g, std::uint32_t self) {
        std::uint32_t p = g.parents(self)[0];
        if (!g.needs_grad(p)) return;
        T gv = g.grad(self)[0];
        T* d = g.grad_buffer(p).unshared_data();
        std::size_t n = g.value(p).size();
        for (std::size_t i = 0; i < n; ++i) d[i] += gv;
      });
}

// Row-wise softmax with max-shift stabilization.
template <typename T>
Var<T> softmax(Var<T> logits) {
  Graph<T>& g = *logits.graph;
  return g.make_node(
      {logits.id},
      [](Graph<T>& g, const auto& p) {
        const Tensor<T>& X = g.value(p[0]);
        detail::require_rank2(X, "softmax");
        std::size_t B = X.extent(0), C = X.extent(1);
        Tensor<T> out(X.shape());
        T* o = out.unshared_data();
        const T* x = X.data();
        for (std::size_t b = 0; b < B; ++b) {
          T m = x[b * C];
          for (std::size_t c = 1; c < C; ++c) m = std::max(m, x[b * C + c]);
          T z = 0;
          for (std::size_t c = 0; c < C; ++c) {
            o[b * C + c] = std::exp(x[b * C + c] - m);
            z += o[b * C + c];
          }
          for (std::size_t c = 0; c < C; ++c) o[b * C + c] /= z;
        }
        return out;
      },
      [](Graph<T>& g, std::uint32_t self) {
        std::uint32_t pid = g.parents(self)[0];
        if (!g.needs_grad(pid)) return;
        const Tensor<T>& P = g.value(self);
        const Tensor<T>& G = g.grad(self);
        std::size_t B = P.extent(0), C = P.extent(1);
        T* d = g.grad_buffer(pid).unshared_data();
        const T* p = P.data();
        const T* s = G.data();
        for (std::size_t b = 0; b < B; ++b) {
          T dot = 0;
          for (std::size_t c = 0; c < C; ++c) dot += s[b * C + c] * p[b * C + c];
          for (std::size_t c = 0; c < C; ++c)
            d[b * C + c] += p[b * C + c] * (s[b * C + c] - dot);
        }
      });
}

namespace detail {

inline void check_labels(const std::vector<int>& labels, std::size_t B,
                         std::size_t C) {
  if (labels.size() != B)
    throw DimError("cross_entropy: " + std::to_string(labels.size()) +
                   " labels for batch of " + std::to_string(B));
  for (int y : labels)
    if (y < 0 || static_cast<std::size_t>(y) >= C)
      throw DataError("cross_entropy: label " + std::to_string(y) +
                      " outside [0," + std::to_string(C) + ")");
}

}  // namespace detail

// Mean negative log probability of the true labels, from probabilities.
template <typename T>
Var<T> cross_entropy(Var<T> probs, std::shared_ptr<const std::vector<int>> labels) {
  Graph<T>& g = *probs.graph;
  return g.make_node(
      {probs.id},
      [labels](Graph<T>& g, const auto& p) {
        const Tensor<T>& P = g.value(p[0]);
        detail::require_rank2(P, "cross_entropy");
        std::size_t B = P.extent(0), C = P.extent(1);
        detail::check_labels(*labels, B, C);
        T acc = 0;
        for (std::size_t b = 0; b < B; ++b)
          acc -= std::log(P.at2(b, static_cast<std::size_t>((*labels)[b])));
        return Tensor<T>::scalar(acc / static_cast<T>(B));
      },
      [labels](Graph<T>& g, std::uint32_t self) {
        std::uint32_t pid = g.parents(self)[0];
        if (!g.needs_grad(pid)) return;
        const Tensor<T>& P = g.value(pid);
        std::size_t B = P.extent(0), C = P.extent(1);
        T gv = g.grad(self)[0];
        T* d = g.grad_buffer(pid).unshared_data();
        for (std::size_t b = 0; b < B; ++b) {
          std::size_t y = static_cast<std::size_t>((*labels)[b]);
          d[b * C + y] -= gv / (static_cast<T>(B) * P.at2(b, y));
        }
      });
}

// Fused log-softmax + mean negative log likelihood, stable for large logits.
template <typename T>
Var<T> cross_entropy_logits(Var<T> logits,
                            std::shared_ptr<const std::vector<int>> labels) {
  Graph<T>& g = *logits.graph;
  return g.make_node(
      {logits.id},
      [labels](Graph<T>& g, const auto& p) {
        const Tensor<T>& X = g.value(p[0]);
        detail::require_rank2(X, "cross_entropy_logits");
        std::size_t B = X.extent(0), C = X.extent(1);
        detail::check_labels(*labels, B, C);
        const T* x = X.data();
        T acc = 0;
        for (std::size_t b = 0; b < B; ++b) {
          T m = x[b * C];
          for (std::size_t c = 1; c < C; ++c) m = std::max(m, x[b * C + c]);
          T z = 0;
          for (std::size_t c = 0; c < C; ++c) z += std::exp(x[b * C + c] - m);
          T lse = m + std::log(z);
          acc += lse - x[b * C + static_cast<std::size_t>((*labels)[b])];
        }
        return Tensor<T>::scalar(acc / static_cast<T>(B));
      },
      [labels](Graph<T>& g, std::uint32_t self) {
        std::uint32_t pid = g.parents(self)[0];
        if (!g.needs_grad(pid)) return;
        const Tensor<T>& X = g.value(pid);
        std::size_t B = X.extent(0), C = X.extent(1);
        T gv = g.grad(self)[0];
        const T* x = X.data();
        T* d = g.grad_buffer(pid).unshared_data();
        for (std::size_t b = 0; b < B; ++b) {
          T m = x[b * C];
          for (std::size_t c = 1; c < C; ++c) m = std::max(m, x[b * C + c]);
          T z = 0;
          for (std::size_t c = 0; c < C; ++c) z += std::exp(x[b * C + c] - m);
          for (std::size_t c = 0; c < C; ++c) {
            T soft = std::exp(x[b * C + c] - m) / z;
            T ind = (static_cast<std::size_t>((*labels)[b]) == c) ? T(1) : T(0);
            d[b * C + c] += gv * (soft - ind) / static_cast<T>(B);
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Finite differences
// ---------------------------------------------------------------------------

// Max over coordinates of |analytic - central| / max(1, |central|), probing
// one parameter leaf with central differences of half-width eps. Uses
// replay(), so it works on any recorded graph; the leaf is restored before
// returning.
template <typename T>
double finite_diff_check(Graph<T>& g, Var<T> loss, Var<T> param,
                         const Tensor<T>& analytic, T eps) {
  const std::size_t n = g.value(param.id).size();
  double worst = 0;
  for (std::size_t i = 0; i < n; ++i) {
    T orig = g.value(param.id)[i];
    g.poke_leaf(param.id, i, orig + eps);
    g.replay();
    double up = static_cast<double>(g.value(loss.id)[0]);
    g.poke_leaf(param.id, i, orig - eps);
    g.replay();
    double down = static_cast<double>(g.value(loss.id)[0]);
    g.poke_leaf(param.id, i, orig);
    double central = (up - down) / (2.0 * static_cast<double>(eps));
    double err = std::abs(static_cast<double>(analytic[i]) - central) /
                 std::max(1.0, std::abs(central));
    worst = std::max(worst, err);
  }
  g.replay();
  return worst;
}

}  // namespace rcrn
