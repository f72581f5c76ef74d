// Copyright 2026 The rcrn Authors
// SPDX-License-Identifier: Apache-2.0
//
// Adam optimization and the batch training loop. One optimizer step per
// batch: forward graph, reverse sweep, global-norm clip, bias-corrected
// update. Runs are deterministic for a fixed seed.

#pragma once

#include <cmath>
#include <fstream>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "rcrn/checkpoint.hpp"
#include "rcrn/data.hpp"
#include "rcrn/errors.hpp"
#include "rcrn/model.hpp"

namespace rcrn {

template <typename T>
struct AdamState {
  T lr = T(0.001);
  T beta1 = T(0.9);
  T beta2 = T(0.999);
  T eps = T(1e-8);
  std::uint64_t step = 0;
  std::map<std::string, Tensor<T>> m, v;
};

// Scales all gradients by max_norm/norm when the global L2 norm exceeds
// max_norm; returns the pre-clip norm.
template <typename T>
double clip_global_norm(GradientMap<T>& grads, T max_norm) {
  double sq = 0;
  for (const auto& [name, g] : grads) {
    const T* p = g.data();
    for (std::size_t i = 0; i < g.size(); ++i)
      sq += static_cast<double>(p[i]) * static_cast<double>(p[i]);
  }
  double norm = std::sqrt(sq);
  if (norm > static_cast<double>(max_norm) && norm > 0) {
    T scale = static_cast<T>(static_cast<double>(max_norm) / norm);
    for (auto& [name, g] : grads) {
      T* p = g.unshared_data();
      for (std::size_t i = 0; i < g.size(); ++i) p[i] *= scale;
    }
  }
  return norm;
}

// In-place bias-corrected Adam update of every parameter in `params`.
// A non-finite gradient aborts before any parameter changes.
template <typename T>
void adam_step(AdamState<T>& st, const std::map<std::string, Tensor<T>*>& params,
               const GradientMap<T>& grads) {
  for (const auto& [name, pt] : params) {
    auto it = grads.find(name);
    if (it == grads.end())
      throw ContractError("adam_step: no gradient for parameter " + name);
    if (!it->second.all_finite())
      throw NumericError("non-finite gradient for parameter " + name);
    if (!it->second.same_shape(*pt))
      throw DimError("adam_step: gradient shape " +
                     shape_str(it->second.shape()) + " vs parameter " +
                     shape_str(pt->shape()) + " for " + name);
  }
  ++st.step;
  const T bc1 = T(1) - static_cast<T>(std::pow(static_cast<double>(st.beta1),
                                               static_cast<double>(st.step)));
  const T bc2 = T(1) - static_cast<T>(std::pow(static_cast<double>(st.beta2),
                                               static_cast<double>(st.step)));
  for (const auto& [name, pt] : params) {
    const Tensor<T>& g = grads.at(name);
    Tensor<T>& m =
        st.m.try_emplace(name, Tensor<T>::zeros(g.shape())).first->second;
    Tensor<T>& v =
        st.v.try_emplace(name, Tensor<T>::zeros(g.shape())).first->second;
    T* mp = m.unshared_data();
    T* vp = v.unshared_data();
    T* pp = pt->unshared_data();
    const T* gp = g.data();
    for (std::size_t i = 0; i < g.size(); ++i) {
      mp[i] = st.beta1 * mp[i] + (T(1) - st.beta1) * gp[i];
      vp[i] = st.beta2 * vp[i] + (T(1) - st.beta2) * gp[i] * gp[i];
      T mhat = mp[i] / bc1;
      T vhat = vp[i] / bc2;
      pp[i] -= st.lr * mhat / (std::sqrt(vhat) + st.eps);
    }
  }
}

// Argmax accuracy over the dataset, ties toward the lower class id.
template <typename T>
double evaluate(const Model<T>& model, const Dataset& data, ScanExec exec = {},
                std::size_t batch_size = 64) {
  if (data.size() == 0) throw DataError("evaluate: empty dataset");
  if (data.class_count > model.class_count)
    throw DataError("evaluate: dataset has " +
                    std::to_string(data.class_count) +
                    " classes, model supports " +
                    std::to_string(model.class_count));
  std::size_t correct = 0;
  for (const Batch& b : batch_pad(data, batch_size, std::nullopt)) {
    std::vector<int> pred = model_predict(model, b, exec);
    for (std::size_t i = 0; i < b.batch; ++i)
      if (pred[i] == b.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

template <typename T>
struct TrainOptions {
  T lr = T(0.001);
  std::size_t batch_size = 32;
  std::size_t epochs = 10;
  std::uint64_t seed = 1;
  T clip_norm = T(5);
  ScanExec exec{};
  std::string checkpoint_path;  // empty: no per-epoch checkpoint
  std::string metrics_path;     // empty: no CSV
  double stop_dev_acc = 2.0;    // early stop once dev accuracy reaches this
  const Vocab* vocab = nullptr;
  const LabelMap* labels = nullptr;
  std::ostream* progress = nullptr;  // one line per epoch when non-null
};

struct EpochMetrics {
  std::size_t epoch = 0;
  double train_loss = 0;
  double dev_acc = 0;
};

// Epochs of shuffle -> encode -> pool -> classify -> loss -> backward ->
// adam. The checkpoint is written after each completed epoch, so a
// divergence abort leaves the previous epoch's file in place.
template <typename T>
std::vector<EpochMetrics> train_loop(Model<T>& model, const Dataset& train,
                                     const Dataset& dev,
                                     const TrainOptions<T>& opt) {
  if (train.class_count > model.class_count ||
      dev.class_count > model.class_count)
    throw DataError("train_loop: dataset class count exceeds model's");
  if (!opt.checkpoint_path.empty() && (!opt.vocab || !opt.labels))
    throw ContractError("train_loop: checkpoint_path needs vocab and labels");

  AdamState<T> adam;
  adam.lr = opt.lr;
  std::map<std::string, Tensor<T>*> params;
  visit_trainable_params(
      model, [&](const std::string& n, Tensor<T>& t) { params[n] = &t; });

  std::ofstream metrics;
  if (!opt.metrics_path.empty()) {
    metrics.open(opt.metrics_path, std::ios::trunc);
    if (!metrics)
      throw DataError("cannot write metrics file: " + opt.metrics_path);
    metrics << "epoch,train_loss,dev_acc\n" << std::flush;
  }

  std::vector<EpochMetrics> log;
  for (std::size_t epoch = 1; epoch <= opt.epochs; ++epoch) {
    double loss_sum = 0;
    std::size_t seen = 0;
    for (const Batch& b : batch_pad(train, opt.batch_size, opt.seed + epoch)) {
      Graph<T> g;
      Var<T> loss = model_loss(g, model, b, opt.exec);
      double lv = static_cast<double>(loss.value()[0]);
      if (!std::isfinite(lv))
        throw NumericError("loss diverged at epoch " + std::to_string(epoch));
      GradientMap<T> grads = g.backward(loss);
      clip_global_norm(grads, opt.clip_norm);
      adam_step(adam, params, grads);
      loss_sum += lv * static_cast<double>(b.batch);
      seen += b.batch;
    }
    EpochMetrics em;
    em.epoch = epoch;
    em.train_loss = loss_sum / static_cast<double>(seen);
    em.dev_acc = evaluate(model, dev, opt.exec);
    log.push_back(em);
    if (metrics.is_open())
      metrics << em.epoch << ',' << em.train_loss << ',' << em.dev_acc << '\n'
              << std::flush;
    if (opt.progress)
      *opt.progress << "epoch " << em.epoch << " train_loss " << em.train_loss
                    << " dev_acc " << em.dev_acc << std::endl;
    if (!opt.checkpoint_path.empty())
      save_checkpoint(model, *opt.vocab, *opt.labels, opt.checkpoint_path);
    if (em.dev_acc >= opt.stop_dev_acc) break;
  }
  return log;
}

}  // namespace rcrn
