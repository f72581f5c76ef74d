// Copyright 2026 The rcrn Authors
// SPDX-License-Identifier: Apache-2.0

#include "rcrn/scan.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "rcrn/errors.hpp"

using namespace rcrn;

namespace {

template <typename T>
ScanInput<T> random_scan_input(std::size_t R, std::size_t Tn, std::size_t F,
                               std::mt19937_64& rng) {
  ScanInput<T> in;
  in.gate_seq = Tensor<T>::uniform({R, Tn, F}, T(-4), T(4), rng);
  in.value_seq = Tensor<T>::uniform({R, Tn, F}, T(-2), T(2), rng);
  in.c0 = Tensor<T>::uniform({R, F}, T(-2), T(2), rng);
  return in;
}

}  // namespace

TEST_CASE("saturated gate keeps the initial state unchanged") {
  std::mt19937_64 rng(1);
  ScanInput<double> in = random_scan_input<double>(2, 6, 3, rng);
  in.gate_seq = TensorD::full({2, 6, 3}, 100.0);
  ScanOutput<double> out = scan_naive(in);
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t t = 0; t < 6; ++t)
      for (std::size_t f = 0; f < 3; ++f)
        CHECK(out.c4_seq[(r * 6 + t) * 3 + f] == in.c0[r * 3 + f]);
}

TEST_CASE("zero gate from zero state walks toward one as 1 - 2^-t") {
  std::size_t Tn = 10;
  ScanInput<double> in;
  in.gate_seq = TensorD::zeros({1, Tn, 1});
  in.value_seq = TensorD::full({1, Tn, 1}, 1.0);
  in.c0 = TensorD::zeros({1, 1});
  ScanOutput<double> out = scan_optimized(in, 2);
  for (std::size_t t = 0; t < Tn; ++t) {
    double expect = 1.0 - std::pow(2.0, -static_cast<double>(t + 1));
    CHECK(out.c4_seq[t] == expect);  // exact in binary floating point
  }
}

TEST_CASE("optimized scan is bit-identical to naive across the grid") {
  std::mt19937_64 rng(2);
  for (std::size_t Tn : {1ul, 2ul, 16ul}) {
    for (std::size_t F : {1ul, 3ul, 64ul}) {
      ScanInput<double> d = random_scan_input<double>(3, Tn, F, rng);
      ScanInput<float> f = random_scan_input<float>(3, Tn, F, rng);
      TensorD dn = scan_naive(d).c4_seq;
      TensorF fn = scan_naive(f).c4_seq;
      for (unsigned w : {1u, 4u, 8u}) {
        CHECK(scan_optimized(d, w).c4_seq.bit_equal(dn));
        CHECK(scan_optimized(f, w).c4_seq.bit_equal(fn));
      }
    }
  }
}

TEST_CASE("rank-2 inputs run a single row") {
  std::mt19937_64 rng(3);
  ScanInput<double> flat;
  flat.gate_seq = TensorD::uniform({5, 4}, -3, 3, rng);
  flat.value_seq = TensorD::uniform({5, 4}, -1, 1, rng);
  flat.c0 = TensorD::uniform({4}, -1, 1, rng);
  ScanInput<double> boxed;
  boxed.gate_seq = TensorD(Shape{1, 5, 4},
                           std::vector<double>(flat.gate_seq.data(),
                                               flat.gate_seq.data() + 20));
  boxed.value_seq = TensorD(Shape{1, 5, 4},
                            std::vector<double>(flat.value_seq.data(),
                                                flat.value_seq.data() + 20));
  boxed.c0 = TensorD(Shape{1, 4}, std::vector<double>(flat.c0.data(),
                                                      flat.c0.data() + 4));
  TensorD a = scan_naive(flat).c4_seq;
  TensorD b = scan_naive(boxed).c4_seq;
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("scan outputs stay inside the convex hull of state and values") {
  std::mt19937_64 rng(4);
  for (int rep = 0; rep < 120; ++rep) {
    std::uniform_int_distribution<std::size_t> d(1, 6);
    std::size_t R = d(rng), Tn = d(rng), F = d(rng);
    ScanInput<double> in = random_scan_input<double>(R, Tn, F, rng);
    TensorD out = scan_optimized(in, 1 + rep % 4).c4_seq;
    for (std::size_t r = 0; r < R; ++r) {
      for (std::size_t f = 0; f < F; ++f) {
        double lo = in.c0[r * F + f], hi = lo;
        for (std::size_t t = 0; t < Tn; ++t) {
          double v = in.value_seq[(r * Tn + t) * F + f];
          lo = std::min(lo, v);
          hi = std::max(hi, v);
          double c = out[(r * Tn + t) * F + f];
          CHECK(c >= lo - 1e-12);
          CHECK(c <= hi + 1e-12);
        }
      }
    }
  }
}

TEST_CASE("scan shape violations throw") {
  std::mt19937_64 rng(5);
  ScanInput<double> in = random_scan_input<double>(2, 3, 4, rng);
  in.value_seq = TensorD::zeros({2, 3, 5});
  CHECK_THROWS_AS(scan_naive(in), DimError);
  in = random_scan_input<double>(2, 3, 4, rng);
  in.c0 = TensorD::zeros({2, 5});
  CHECK_THROWS_AS(scan_naive(in), DimError);
}

TEST_CASE("graph scan matches the value-level kernel and its gradient") {
  std::mt19937_64 rng(6);
  ScanInput<double> in = random_scan_input<double>(2, 4, 3, rng);
  Graph<double> g;
  Var<double> gate = g.param("gate", in.gate_seq);
  Var<double> values = g.param("values", in.value_seq);
  Var<double> c0 = g.param("c0", in.c0);
  ScanExec exec;
  exec.workers = 3;
  Var<double> c4 = scan(gate, values, c0, exec);
  CHECK(c4.value().bit_equal(scan_naive(in).c4_seq));
  Var<double> loss = sum(mul(c4, g.input(TensorD::uniform(c4.shape(), -1.0,
                                                          1.0, rng))));
  auto grads = g.backward(loss);
  for (const auto& [name, id] : g.param_leaves()) {
    double err = finite_diff_check(g, loss, Var<double>{&g, id},
                                   grads.at(name), 1e-5);
    INFO(name);
    CHECK(err <= 1e-4);
  }
}

TEST_CASE("combine modes compute the two documented products") {
  std::mt19937_64 rng(7);
  TensorD h2 = TensorD::uniform({2, 3, 2}, -2, 2, rng);
  TensorD c3 = TensorD::uniform({2, 3, 2}, -2, 2, rng);
  TensorD c4 = TensorD::uniform({2, 3, 2}, -2, 2, rng);
  TensorD lit = combine_output(h2, c3, c4, OutputGateMode::literal);
  TensorD gat = combine_output(h2, c3, c4, OutputGateMode::gated_c4);
  for (std::size_t i = 0; i < lit.size(); ++i) {
    CHECK(lit[i] == h2[i] * c3[i]);
    CHECK(gat[i] == stable_sigmoid(h2[i]) * c4[i]);
  }
}

TEST_CASE("literal combine with unit controller output returns the state") {
  std::mt19937_64 rng(8);
  TensorD ones = TensorD::full({1, 4, 3}, 1.0);
  TensorD c3 = TensorD::uniform({1, 4, 3}, -2, 2, rng);
  TensorD c4 = TensorD::uniform({1, 4, 3}, -2, 2, rng);
  TensorD out = combine_output(ones, c3, c4, OutputGateMode::literal);
  CHECK(out.bit_equal(c3));
}

TEST_CASE("output gate mode parses and rejects") {
  CHECK(parse_output_gate_mode("literal") == OutputGateMode::literal);
  CHECK(parse_output_gate_mode("gated_c4") == OutputGateMode::gated_c4);
  CHECK_THROWS_AS(parse_output_gate_mode("nonsense"), ConfigError);
}
