// Copyright 2026 The rcrn Authors
// SPDX-License-Identifier: Apache-2.0

#include "rcrn/train.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "rcrn/errors.hpp"

using namespace rcrn;

namespace {

std::string tmp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "rcrn_tests";
  std::filesystem::create_directories(dir);
  return (dir / name).string();
}

EncoderConfig tiny_encoder(std::uint64_t seed) {
  EncoderConfig enc;
  enc.input_dim = 4;
  enc.hidden_dim = 4;
  enc.kind = EncoderKind::rcrn;
  enc.atom = AtomKind::lstm;
  enc.seed = seed;
  return enc;
}

template <typename T>
std::map<std::string, Tensor<T>> snapshot(const Model<T>& m) {
  std::map<std::string, Tensor<T>> out;
  visit_model_params(m, [&](const std::string& n, const Tensor<T>& t) {
    out.emplace(n, t);
  });
  return out;
}

}  // namespace

TEST_CASE("first adam step moves each weight by about lr times sign") {
  TensorD w({2}, {1.0, -2.0});
  GradientMap<double> grads;
  grads.emplace("w", TensorD({2}, {0.5, -0.25}));
  AdamState<double> st;
  std::map<std::string, TensorD*> params{{"w", &w}};
  adam_step(st, params, grads);
  CHECK(st.step == 1);
  CHECK(w[0] == doctest::Approx(1.0 - 0.001).epsilon(1e-6));
  CHECK(w[1] == doctest::Approx(-2.0 + 0.001).epsilon(1e-6));
}

TEST_CASE("adam matches a straightline reference over several steps") {
  std::mt19937_64 rng(51);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  TensorD w({3}, {0.3, -0.7, 1.1});
  std::vector<double> ref(w.data(), w.data() + 3);
  std::vector<double> m(3, 0.0), v(3, 0.0);
  AdamState<double> st;
  st.lr = 0.01;
  std::map<std::string, TensorD*> params{{"w", &w}};
  for (int step = 1; step <= 5; ++step) {
    std::vector<double> g(3);
    for (double& x : g) x = dist(rng);
    GradientMap<double> grads;
    grads.emplace("w", TensorD({3}, g));
    adam_step(st, params, grads);
    for (int i = 0; i < 3; ++i) {
      m[i] = 0.9 * m[i] + 0.1 * g[i];
      v[i] = 0.999 * v[i] + 0.001 * g[i] * g[i];
      double mhat = m[i] / (1.0 - std::pow(0.9, step));
      double vhat = v[i] / (1.0 - std::pow(0.999, step));
      ref[i] -= 0.01 * mhat / (std::sqrt(vhat) + 1e-8);
      CHECK(w[static_cast<std::size_t>(i)] ==
            doctest::Approx(ref[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("adam validates gradients before touching parameters") {
  TensorD w({2}, {1.0, 2.0});
  TensorD w2({2}, {3.0, 4.0});
  AdamState<double> st;
  std::map<std::string, TensorD*> params{{"a", &w}, {"b", &w2}};

  SUBCASE("missing gradient") {
    GradientMap<double> grads;
    grads.emplace("a", TensorD({2}, {0.1, 0.1}));
    CHECK_THROWS_AS(adam_step(st, params, grads), ContractError);
  }
  SUBCASE("non-finite gradient names the parameter") {
    GradientMap<double> grads;
    grads.emplace("a", TensorD({2}, {0.1, 0.1}));
    grads.emplace("b", TensorD({2}, {std::nan(""), 0.1}));
    try {
      adam_step(st, params, grads);
      FAIL_CHECK("expected NumericError");
    } catch (const NumericError& e) {
      CHECK(std::string(e.what()).find("b") != std::string::npos);
    }
  }
  SUBCASE("shape mismatch") {
    GradientMap<double> grads;
    grads.emplace("a", TensorD({2}, {0.1, 0.1}));
    grads.emplace("b", TensorD({3}, {0.1, 0.1, 0.1}));
    CHECK_THROWS_AS(adam_step(st, params, grads), DimError);
  }
  CHECK(w[0] == 1.0);  // every failure left the parameters alone
  CHECK(w2[1] == 4.0);
}

TEST_CASE("global norm clipping scales only above the threshold") {
  GradientMap<double> grads;
  grads.emplace("a", TensorD({1}, {3.0}));
  grads.emplace("b", TensorD({1}, {4.0}));
  GradientMap<double> copy = grads;
  CHECK(clip_global_norm(copy, 10.0) == doctest::Approx(5.0));
  CHECK(copy.at("a")[0] == 3.0);
  CHECK(copy.at("b")[0] == 4.0);
  CHECK(clip_global_norm(grads, 2.5) == doctest::Approx(5.0));
  CHECK(grads.at("a")[0] == doctest::Approx(1.5));
  CHECK(grads.at("b")[0] == doctest::Approx(2.0));
}

TEST_CASE("evaluate breaks argmax ties toward the lower class id") {
  SynthTask t = gen_first_token_task(8, 4, 3, 6, 2);
  Model<double> m =
      init_model<double>(tiny_encoder(3), t.vocab.size(), 2, 4);
  m.head.W2 = TensorD::zeros(m.head.W2.shape());
  m.head.b2 = TensorD::zeros(m.head.b2.shape());
  std::size_t zeros = 0;
  for (const Example& e : t.train.examples) zeros += (e.label == 0);
  double acc = evaluate(m, t.train);
  CHECK(acc == doctest::Approx(static_cast<double>(zeros) / 8.0));
  Dataset empty;
  CHECK_THROWS_AS(evaluate(m, empty), DataError);
}

TEST_CASE("training is deterministic for a fixed seed") {
  SynthTask t = gen_first_token_task(24, 8, 4, 6, 7);
  TrainOptions<double> opt;
  opt.epochs = 2;
  opt.batch_size = 8;
  opt.seed = 5;
  Model<double> a = init_model<double>(tiny_encoder(11), t.vocab.size(), 2, 4);
  Model<double> b = init_model<double>(tiny_encoder(11), t.vocab.size(), 2, 4);
  std::vector<EpochMetrics> la = train_loop(a, t.train, t.test, opt);
  std::vector<EpochMetrics> lb = train_loop(b, t.train, t.test, opt);
  REQUIRE(la.size() == lb.size());
  for (std::size_t i = 0; i < la.size(); ++i) {
    CHECK(la[i].train_loss == lb[i].train_loss);
    CHECK(la[i].dev_acc == lb[i].dev_acc);
  }
  auto sa = snapshot(a);
  auto sb = snapshot(b);
  for (const auto& [name, ta] : sa) CHECK(ta.bit_equal(sb.at(name)));
}

TEST_CASE("training reduces loss on a learnable task") {
  SynthTask t = gen_first_token_task(48, 16, 4, 6, 13);
  Model<double> m = init_model<double>(tiny_encoder(17), t.vocab.size(), 2, 8);
  TrainOptions<double> opt;
  opt.lr = 0.01;
  opt.epochs = 5;
  opt.batch_size = 16;
  std::vector<EpochMetrics> log = train_loop(m, t.train, t.test, opt);
  REQUIRE(log.size() == 5);
  CHECK(log.back().train_loss < log.front().train_loss);
}

TEST_CASE("zero epochs leaves the model untouched") {
  SynthTask t = gen_first_token_task(8, 4, 3, 6, 19);
  Model<double> m = init_model<double>(tiny_encoder(23), t.vocab.size(), 2, 4);
  auto before = snapshot(m);
  TrainOptions<double> opt;
  opt.epochs = 0;
  std::vector<EpochMetrics> log = train_loop(m, t.train, t.test, opt);
  CHECK(log.empty());
  auto after = snapshot(m);
  for (const auto& [name, t0] : before) CHECK(t0.bit_equal(after.at(name)));
}

TEST_CASE("early stopping halts once dev accuracy reaches the target") {
  SynthTask t = gen_first_token_task(8, 4, 3, 6, 29);
  Model<double> m = init_model<double>(tiny_encoder(31), t.vocab.size(), 2, 4);
  TrainOptions<double> opt;
  opt.epochs = 5;
  opt.stop_dev_acc = 0.0;  // any accuracy qualifies
  std::vector<EpochMetrics> log = train_loop(m, t.train, t.test, opt);
  CHECK(log.size() == 1);
}

TEST_CASE("metrics file mirrors the returned log") {
  SynthTask t = gen_first_token_task(16, 8, 3, 6, 37);
  Model<double> m = init_model<double>(tiny_encoder(41), t.vocab.size(), 2, 4);
  TrainOptions<double> opt;
  opt.epochs = 3;
  opt.batch_size = 8;
  opt.metrics_path = tmp_path("metrics.csv");
  std::vector<EpochMetrics> log = train_loop(m, t.train, t.test, opt);
  std::ifstream in(opt.metrics_path);
  REQUIRE(bool(in));
  std::string line;
  REQUIRE(std::getline(in, line));
  CHECK(line == "epoch,train_loss,dev_acc");
  for (const EpochMetrics& em : log) {
    REQUIRE(std::getline(in, line));
    std::istringstream row(line);
    std::string cell;
    REQUIRE(std::getline(row, cell, ','));
    CHECK(std::stoul(cell) == em.epoch);
    REQUIRE(std::getline(row, cell, ','));
    CHECK(std::stod(cell) == doctest::Approx(em.train_loss).epsilon(1e-4));
    REQUIRE(std::getline(row, cell, ','));
    CHECK(std::stod(cell) == doctest::Approx(em.dev_acc).epsilon(1e-4));
  }
  CHECK(!std::getline(in, line));
}

TEST_CASE("checkpoints persist per epoch and survive divergence") {
  SynthTask t = gen_first_token_task(16, 8, 3, 6, 43);
  std::string path = tmp_path("train_ckpt.rcrn");
  {
    Model<double> m =
        init_model<double>(tiny_encoder(47), t.vocab.size(), 2, 4);
    TrainOptions<double> opt;
    opt.epochs = 1;
    opt.checkpoint_path = path;
    CHECK_THROWS_AS(train_loop(m, t.train, t.test, opt), ContractError);
    opt.vocab = &t.vocab;
    opt.labels = &t.labels;
    train_loop(m, t.train, t.test, opt);
    LoadedCheckpoint<double> back = load_checkpoint<double>(path);
    auto live = snapshot(m);
    auto saved = snapshot(back.model);
    // Training ran in double; the file rounds through binary32.
    for (const auto& [name, tv] : live) {
      const TensorD& sv = saved.at(name);
      for (std::size_t i = 0; i < tv.size(); ++i)
        CHECK(sv[i] == static_cast<double>(static_cast<float>(tv[i])));
    }
  }
  std::ifstream snap(path, std::ios::binary);
  std::string before((std::istreambuf_iterator<char>(snap)),
                     std::istreambuf_iterator<char>());
  {
    Model<double> m =
        init_model<double>(tiny_encoder(47), t.vocab.size(), 2, 4);
    m.head.b2 = TensorD::full(m.head.b2.shape(), std::nan(""));
    TrainOptions<double> opt;
    opt.epochs = 3;
    opt.checkpoint_path = path;
    opt.vocab = &t.vocab;
    opt.labels = &t.labels;
    CHECK_THROWS_AS(train_loop(m, t.train, t.test, opt), NumericError);
  }
  std::ifstream snap2(path, std::ios::binary);
  std::string after((std::istreambuf_iterator<char>(snap2)),
                    std::istreambuf_iterator<char>());
  CHECK(before == after);
}
