// Copyright 2026 The rcrn Authors
// SPDX-License-Identifier: Apache-2.0

#include "rcrn/checkpoint.hpp"

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "doctest.h"
#include "rcrn/errors.hpp"
#include "rcrn/model.hpp"

using namespace rcrn;

namespace {

std::string tmp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "rcrn_tests";
  std::filesystem::create_directories(dir);
  return (dir / name).string();
}

std::string read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(bool(in));
  return std::string(std::istreambuf_iterator<char>(in),
                     std::istreambuf_iterator<char>());
}

void write_bytes(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Vocab make_vocab(std::size_t size) {
  Vocab v;
  for (std::size_t i = v.size(); i < size; ++i)
    v.add("tok" + std::to_string(i));
  return v;
}

LabelMap make_labels(std::size_t count) {
  LabelMap l;
  for (std::size_t i = 0; i < count; ++i) l.add("class" + std::to_string(i));
  return l;
}

template <typename T>
Model<T> random_model(std::mt19937_64& rng) {
  EncoderConfig enc;
  std::uniform_int_distribution<int> kind(0, 2);
  switch (kind(rng)) {
    case 0: enc.kind = EncoderKind::bilstm; break;
    case 1: enc.kind = EncoderKind::stacked_bilstm; break;
    default: enc.kind = EncoderKind::rcrn; break;
  }
  enc.atom = (rng() & 1) ? AtomKind::lstm : AtomKind::gru;
  enc.output_gate =
      (rng() & 1) ? OutputGateMode::literal : OutputGateMode::gated_c4;
  std::uniform_int_distribution<std::size_t> dim(1, 4);
  enc.input_dim = dim(rng);
  enc.hidden_dim = dim(rng);
  enc.layers = std::uniform_int_distribution<std::size_t>(1, 3)(rng);
  enc.seed = rng();
  std::size_t vocab_size = std::uniform_int_distribution<std::size_t>(2, 9)(rng);
  std::size_t classes = std::uniform_int_distribution<std::size_t>(2, 4)(rng);
  std::size_t head = dim(rng);
  Model<T> m = init_model<T>(enc, vocab_size, classes, head);
  m.embedding.trainable = (rng() & 1) != 0;
  return m;
}

template <typename T>
void check_models_bit_equal(const Model<T>& a, const Model<T>& b) {
  std::vector<std::pair<std::string, const Tensor<T>*>> pa, pb;
  visit_model_params(a, [&](const std::string& n, const Tensor<T>& t) {
    pa.emplace_back(n, &t);
  });
  visit_model_params(b, [&](const std::string& n, const Tensor<T>& t) {
    pb.emplace_back(n, &t);
  });
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i].first == pb[i].first);
    CHECK(pa[i].second->bit_equal(*pb[i].second));
  }
}

}  // namespace

TEST_CASE("checkpoint roundtrip is bit exact for float models") {
  std::mt19937_64 rng(404);
  std::string path = tmp_path("round.rcrn");
  for (int rep = 0; rep < 100; ++rep) {
    CAPTURE(rep);
    Model<float> m = random_model<float>(rng);
    Vocab v = make_vocab(m.embedding.vocab_size());
    LabelMap l = make_labels(m.class_count);
    save_checkpoint(m, v, l, path);
    LoadedCheckpoint<float> back = load_checkpoint<float>(path);
    CHECK(back.model.enc.kind == m.enc.kind);
    CHECK(back.model.enc.atom == m.enc.atom);
    CHECK(back.model.enc.output_gate == m.enc.output_gate);
    CHECK(back.model.enc.input_dim == m.enc.input_dim);
    CHECK(back.model.enc.hidden_dim == m.enc.hidden_dim);
    CHECK(back.model.enc.layers == m.enc.layers);
    CHECK(back.model.class_count == m.class_count);
    CHECK(back.model.head_hidden == m.head_hidden);
    CHECK(back.model.embedding.trainable == m.embedding.trainable);
    CHECK(back.vocab.tokens() == v.tokens());
    CHECK(back.labels.names() == l.names());
    check_models_bit_equal(back.model, m);
  }
}

TEST_CASE("double models reload through the binary32 payload stably") {
  std::mt19937_64 rng(405);
  std::string p1 = tmp_path("stable1.rcrn");
  std::string p2 = tmp_path("stable2.rcrn");
  for (int rep = 0; rep < 20; ++rep) {
    CAPTURE(rep);
    Model<double> m = random_model<double>(rng);
    Vocab v = make_vocab(m.embedding.vocab_size());
    LabelMap l = make_labels(m.class_count);
    save_checkpoint(m, v, l, p1);
    LoadedCheckpoint<double> once = load_checkpoint<double>(p1);
    save_checkpoint(once.model, once.vocab, once.labels, p2);
    CHECK(read_bytes(p1) == read_bytes(p2));
    LoadedCheckpoint<double> twice = load_checkpoint<double>(p2);
    check_models_bit_equal(once.model, twice.model);
  }
}

TEST_CASE("corrupt checkpoints are rejected") {
  std::mt19937_64 rng(406);
  Model<float> m = random_model<float>(rng);
  Vocab v = make_vocab(m.embedding.vocab_size());
  LabelMap l = make_labels(m.class_count);
  std::string good = tmp_path("good.rcrn");
  save_checkpoint(m, v, l, good);
  std::string bytes = read_bytes(good);
  REQUIRE(bytes.size() > 16);

  SUBCASE("truncation") {
    for (std::size_t keep : {std::size_t{0}, std::size_t{3}, std::size_t{10},
                             bytes.size() / 2, bytes.size() - 1}) {
      std::string p = tmp_path("trunc.rcrn");
      write_bytes(p, bytes.substr(0, keep));
      CHECK_THROWS_AS(load_checkpoint<float>(p), DataError);
    }
  }
  SUBCASE("bad magic") {
    std::string mangled = bytes;
    mangled[0] = 'X';
    std::string p = tmp_path("magic.rcrn");
    write_bytes(p, mangled);
    CHECK_THROWS_AS(load_checkpoint<float>(p), DataError);
  }
  SUBCASE("unsupported version") {
    std::string mangled = bytes;
    mangled[4] = 9;
    std::string p = tmp_path("version.rcrn");
    write_bytes(p, mangled);
    CHECK_THROWS_AS(load_checkpoint<float>(p), DataError);
  }
  SUBCASE("trailing bytes") {
    std::string p = tmp_path("trail.rcrn");
    write_bytes(p, bytes + "junk");
    CHECK_THROWS_AS(load_checkpoint<float>(p), DataError);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(load_checkpoint<float>(tmp_path("absent.rcrn")),
                    DataError);
  }
}
