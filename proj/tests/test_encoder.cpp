// Copyright 2026 The rcrn Authors
// SPDX-License-Identifier: Apache-2.0

#include "rcrn/encoder.hpp"

#include <random>
#include <string>
#include <vector>

#include "doctest.h"
#include "straightline_rcrn.hpp"

using namespace rcrn;

namespace {

EncoderConfig small_cfg(EncoderKind kind, AtomKind atom, OutputGateMode mode,
                        std::size_t in, std::size_t d,
                        std::uint64_t seed) {
  EncoderConfig cfg;
  cfg.input_dim = in;
  cfg.hidden_dim = d;
  cfg.kind = kind;
  cfg.atom = atom;
  cfg.output_gate = mode;
  cfg.seed = seed;
  return cfg;
}

std::vector<std::size_t> random_lengths(std::size_t B, std::size_t T,
                                        std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> d(1, T);
  std::vector<std::size_t> out(B);
  for (auto& l : out) l = d(rng);
  return out;
}

}  // namespace

TEST_CASE("mask construction and validation") {
  BatchMask m = BatchMask::from_lengths({3, 1}, 4);
  CHECK(m.at(0, 2));
  CHECK(!m.at(0, 3));
  CHECK(m.at(1, 0));
  CHECK(!m.at(1, 1));
  CHECK(!m.all_full());
  CHECK(BatchMask::full(2, 4).all_full());
  CHECK_THROWS_AS(BatchMask::from_lengths({5}, 4), DataError);
  BatchMask bad = BatchMask::full(1, 3);
  bad.bits[1] = 0;  // hole in the prefix
  CHECK_THROWS_AS(bad.validate(), DataError);
}

TEST_CASE("parameter counts match an element count over the real tensors") {
  std::mt19937_64 rng(1);
  for (EncoderKind kind : {EncoderKind::rcrn, EncoderKind::bilstm,
                           EncoderKind::stacked_bilstm}) {
    for (AtomKind atom : {AtomKind::lstm, AtomKind::gru}) {
      EncoderConfig cfg = small_cfg(kind, atom, OutputGateMode::gated_c4, 7,
                                    4, 3);
      EncoderParams<double> p = init_encoder<double>(cfg);
      std::size_t total = 0;
      visit_encoder_params(p, "enc",
                           [&](const std::string&, const TensorD& t) {
                             total += t.size();
                           });
      CHECK(total == count_params(cfg));
    }
  }
}

TEST_CASE("rcrn with lstm atoms at doubled input matches a 3-layer stack") {
  for (std::size_t d : {5ul, 50ul, 200ul}) {
    EncoderConfig rcrn_cfg = small_cfg(EncoderKind::rcrn, AtomKind::lstm,
                                       OutputGateMode::gated_c4, 2 * d, d, 1);
    EncoderConfig stack_cfg =
        small_cfg(EncoderKind::stacked_bilstm, AtomKind::lstm,
                  OutputGateMode::gated_c4, 2 * d, d, 1);
    stack_cfg.layers = 3;
    CHECK(count_params(rcrn_cfg) == count_params(stack_cfg));
  }
}

TEST_CASE("encoder init is deterministic per seed") {
  for (int rep = 0; rep < 100; ++rep) {
    std::mt19937_64 pick(rep);
    std::uniform_int_distribution<std::size_t> d(1, 5);
    EncoderKind kind = static_cast<EncoderKind>(rep % 3);
    EncoderConfig cfg =
        small_cfg(kind, rep % 2 ? AtomKind::gru : AtomKind::lstm,
                  OutputGateMode::gated_c4, d(pick), d(pick), 1000 + rep);
    EncoderParams<double> a = init_encoder<double>(cfg);
    EncoderParams<double> b = init_encoder<double>(cfg);
    std::vector<TensorD> av, bv;
    visit_encoder_params(a, "e", [&](const std::string&, const TensorD& t) {
      av.push_back(t);
    });
    visit_encoder_params(b, "e", [&](const std::string&, const TensorD& t) {
      bv.push_back(t);
    });
    REQUIRE(av.size() == bv.size());
    for (std::size_t i = 0; i < av.size(); ++i) CHECK(av[i].bit_equal(bv[i]));
  }
}

TEST_CASE("mirrored parameters make the backward pass a reversed forward") {
  std::mt19937_64 rng(2);
  CellDims dims{3, 4};
  CellParams<double> cell = init_cell<double>(
      AtomKind::lstm, InitScheme::glorot_uniform, dims, rng);
  TensorD seq = TensorD::uniform({2, 5, 3}, -1, 1, rng);
  TensorD rev({2, 5, 3});
  double* rp = rev.unshared_data();
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t t = 0; t < 5; ++t)
      for (std::size_t f = 0; f < 3; ++f)
        rp[(b * 5 + t) * 3 + f] = seq[(b * 5 + (4 - t)) * 3 + f];
  BatchMask mask = BatchMask::full(2, 5);
  BiEncoded<double> a = bidirectional_encode(cell, cell, seq, mask);
  BiEncoded<double> b = bidirectional_encode(cell, cell, rev, mask);
  for (std::size_t bi = 0; bi < 2; ++bi)
    for (std::size_t t = 0; t < 5; ++t)
      for (std::size_t f = 0; f < 4; ++f)
        CHECK(a.h_fwd[(bi * 5 + t) * 4 + f] ==
              b.h_bwd[(bi * 5 + (4 - t)) * 4 + f]);
}

TEST_CASE("one-layer stack computes exactly a bilstm") {
  std::mt19937_64 rng(3);
  EncoderConfig stack = small_cfg(EncoderKind::stacked_bilstm, AtomKind::lstm,
                                  OutputGateMode::gated_c4, 3, 4, 77);
  stack.layers = 1;
  EncoderConfig flat = small_cfg(EncoderKind::bilstm, AtomKind::lstm,
                                 OutputGateMode::gated_c4, 3, 4, 77);
  TensorD seq = TensorD::uniform({2, 4, 3}, -1, 1, rng);
  BatchMask mask = BatchMask::from_lengths({4, 2}, 4);
  EncodedSequence<double> a =
      encode_sequence(stack, init_encoder<double>(stack), seq, mask);
  EncodedSequence<double> b =
      encode_sequence(flat, init_encoder<double>(flat), seq, mask);
  CHECK(a.states.bit_equal(b.states));
}

TEST_CASE("rcrn encode matches the straight-line reference") {
  std::mt19937_64 rng(4);
  int n = 0;
  for (AtomKind atom : {AtomKind::lstm, AtomKind::gru}) {
    for (OutputGateMode mode :
         {OutputGateMode::literal, OutputGateMode::gated_c4}) {
      for (int rep = 0; rep < 5; ++rep) {
        std::uniform_int_distribution<std::size_t> pd(1, 4);
        std::size_t in = pd(rng), d = pd(rng), B = pd(rng);
        std::size_t T = pd(rng) + 1;
        EncoderConfig cfg =
            small_cfg(EncoderKind::rcrn, atom, mode, in, d, 500 + n);
        EncoderParams<double> p = init_encoder<double>(cfg);
        TensorD seq = TensorD::uniform({B, T, in}, -1, 1, rng);
        BatchMask mask = BatchMask::from_lengths(random_lengths(B, T, rng), T);
        EncodedSequence<double> got = rcrn_encode(
            cfg, std::get<RcrnParams<double>>(p), seq, mask);
        TensorD ref = rcrn_test::straightline_rcrn(
            cfg, std::get<RcrnParams<double>>(p), seq, mask);
        REQUIRE(got.states.same_shape(ref));
        for (std::size_t i = 0; i < ref.size(); ++i)
          CHECK(std::abs(got.states[i] - ref[i]) <= 1e-10);
        ++n;
      }
    }
  }
  CHECK(n == 20);
}

TEST_CASE("padding content and amount never leak into real steps") {
  std::mt19937_64 rng(5);
  for (int rep = 0; rep < 120; ++rep) {
    std::uniform_int_distribution<std::size_t> pd(1, 3);
    std::size_t in = pd(rng), d = pd(rng), B = pd(rng);
    std::size_t T = pd(rng) + 1, extra = pd(rng);
    EncoderKind kind = static_cast<EncoderKind>(rep % 3);
    EncoderConfig cfg = small_cfg(
        kind, rep % 2 ? AtomKind::gru : AtomKind::lstm,
        rep % 4 < 2 ? OutputGateMode::gated_c4 : OutputGateMode::literal, in,
        d, 900 + rep);
    if (kind == EncoderKind::stacked_bilstm) cfg.layers = 2;
    EncoderParams<double> p = init_encoder<double>(cfg);
    std::vector<std::size_t> lens = random_lengths(B, T, rng);
    TensorD base = TensorD::uniform({B, T, in}, -1, 1, rng);
    TensorD wide = TensorD::uniform({B, T + extra, in}, -9, 9, rng);
    double* wp = wide.unshared_data();
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t t = 0; t < lens[b]; ++t)
        for (std::size_t f = 0; f < in; ++f)
          wp[(b * (T + extra) + t) * in + f] = base[(b * T + t) * in + f];
    EncodedSequence<double> a =
        encode_sequence(cfg, p, base, BatchMask::from_lengths(lens, T));
    EncodedSequence<double> b = encode_sequence(
        cfg, p, wide, BatchMask::from_lengths(lens, T + extra));
    std::size_t W = a.states.extent(2);
    for (std::size_t bi = 0; bi < B; ++bi) {
      for (std::size_t t = 0; t < T + extra; ++t) {
        for (std::size_t f = 0; f < W; ++f) {
          double wv = b.states[(bi * (T + extra) + t) * W + f];
          if (t < lens[bi]) {
            CHECK(wv == a.states[(bi * T + t) * W + f]);
          } else {
            CHECK(wv == 0.0);
          }
        }
      }
    }
  }
}

TEST_CASE("config validation rejects degenerate settings") {
  EncoderConfig cfg;
  CHECK_THROWS_AS(validate_config(cfg), ConfigError);  // zero dims
  cfg = small_cfg(EncoderKind::stacked_bilstm, AtomKind::lstm,
                  OutputGateMode::gated_c4, 3, 4, 1);
  cfg.layers = 0;
  CHECK_THROWS_AS(validate_config(cfg), ConfigError);
}

TEST_CASE("kind and parameter variant must agree") {
  EncoderConfig rc = small_cfg(EncoderKind::rcrn, AtomKind::lstm,
                               OutputGateMode::gated_c4, 3, 4, 1);
  EncoderConfig bc = small_cfg(EncoderKind::bilstm, AtomKind::lstm,
                               OutputGateMode::gated_c4, 3, 4, 1);
  EncoderParams<double> bi = init_encoder<double>(bc);
  std::mt19937_64 rng(6);
  TensorD seq = TensorD::uniform({1, 2, 3}, -1, 1, rng);
  CHECK_THROWS_AS(encode_sequence(rc, bi, seq, BatchMask::full(1, 2)),
                  ContractError);
}

TEST_CASE("encoder kind parsing") {
  CHECK(parse_encoder_kind("rcrn") == EncoderKind::rcrn);
  CHECK(parse_encoder_kind("bilstm") == EncoderKind::bilstm);
  CHECK(parse_encoder_kind("stacked_bilstm") == EncoderKind::stacked_bilstm);
  CHECK_THROWS_AS(parse_encoder_kind("transformer"), ConfigError);
}
