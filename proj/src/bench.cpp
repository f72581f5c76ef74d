// Copyright 2026 The rcrn Authors
// SPDX-License-Identifier: Apache-2.0

#include "rcrn/bench.hpp"

#include <algorithm>
#include <chrono>
#include <ostream>
#include <random>

#include "rcrn/encoder.hpp"
#include "rcrn/errors.hpp"
#include "rcrn/graph.hpp"
#include "rcrn/scan.hpp"

namespace rcrn {
namespace {

struct Variant {
  std::string name;
  EncoderKind kind;
  ScanExec exec;
};

std::vector<Variant> make_variants(unsigned workers) {
  ScanExec naive{ScanImpl::naive, 1};
  ScanExec opt{ScanImpl::optimized, workers};
  return {
      {"bilstm", EncoderKind::bilstm, naive},
      {"3l-bilstm", EncoderKind::stacked_bilstm, naive},
      {"rcrn-naive-scan", EncoderKind::rcrn, naive},
      {"rcrn-optimized-scan", EncoderKind::rcrn, opt},
  };
}

EncoderConfig variant_config(const Variant& v, std::size_t dim) {
  EncoderConfig cfg;
  cfg.input_dim = dim;
  cfg.hidden_dim = dim;
  cfg.kind = v.kind;
  cfg.atom = AtomKind::lstm;
  cfg.layers = 3;
  cfg.output_gate = OutputGateMode::gated_c4;
  cfg.seed = 7;
  return cfg;
}

// One end-to-end encoder pass; train additionally runs the reverse sweep.
template <typename Body>
double time_once(Body&& body) {
  auto t0 = std::chrono::steady_clock::now();
  body();
  auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double>(t1 - t0).count();
}

double median(std::vector<double> xs) {
  std::sort(xs.begin(), xs.end());
  return xs[xs.size() / 2];
}

// The optimized scan must be bit-identical to the naive scan, and the whole
// encoder must be bit-identical under either execution strategy.
void correctness_gate(const EncoderConfig& cfg,
                      const EncoderParams<float>& params,
                      const Tensor<float>& x, const BatchMask& mask,
                      unsigned workers, std::size_t seq_len) {
  std::mt19937_64 rng(99 + seq_len);
  ScanInput<float> in;
  in.gate_seq = Tensor<float>::uniform({4, seq_len, 8}, -3.0f, 3.0f, rng);
  in.value_seq = Tensor<float>::uniform({4, seq_len, 8}, -1.0f, 1.0f, rng);
  in.c0 = Tensor<float>::uniform({4, 8}, -1.0f, 1.0f, rng);
  Tensor<float> a = scan_naive(in).c4_seq;
  Tensor<float> b = scan_optimized(in, workers).c4_seq;
  if (!a.bit_equal(b))
    throw NumericError("bench gate: scan implementations disagree at T=" +
                       std::to_string(seq_len));
  ScanExec naive{ScanImpl::naive, 1};
  ScanExec opt{ScanImpl::optimized, workers};
  Tensor<float> en = encode_sequence(cfg, params, x, mask, naive).states;
  Tensor<float> eo = encode_sequence(cfg, params, x, mask, opt).states;
  if (!en.bit_equal(eo))
    throw NumericError("bench gate: encoder outputs disagree at T=" +
                       std::to_string(seq_len));
}

}  // namespace

std::vector<BenchRow> run_bench(const BenchOptions& opt,
                                std::ostream* progress) {
  if (opt.reps < 1 || opt.warmup < 0)
    throw ContractError("run_bench: need reps >= 1 and warmup >= 0");
  std::vector<BenchRow> rows;
  for (const Variant& v : make_variants(opt.workers)) {
    EncoderConfig cfg = variant_config(v, opt.dim);
    EncoderParams<float> params = init_encoder<float>(cfg);
    unsigned recorded =
        v.exec.impl == ScanImpl::optimized ? v.exec.workers : 1;
    for (std::size_t T : opt.seq_lens) {
      std::mt19937_64 rng(opt.seed + T);
      Tensor<float> x =
          Tensor<float>::uniform({opt.batch, T, opt.dim}, -1.0f, 1.0f, rng);
      Tensor<float> w = Tensor<float>::uniform(
          {opt.batch, T, 2 * opt.dim}, -1.0f, 1.0f, rng);
      BatchMask mask = BatchMask::full(opt.batch, T);
      if (cfg.kind == EncoderKind::rcrn)
        correctness_gate(cfg, params, x, mask, opt.workers, T);

      for (const char* phase : {"inference", "train"}) {
        bool train = std::string(phase) == "train";
        auto body = [&] {
          if (!train) {
            encode_sequence(cfg, params, x, mask, v.exec);
            return;
          }
          Graph<float> g;
          EncoderVars<float> vars = bind_encoder(g, params, "enc", true);
          std::vector<Var<float>> steps = detail::bind_steps(g, x);
          Var<float> out = encode_graph(g, cfg, vars, steps, mask, v.exec);
          Var<float> loss = sum(mul(out, g.input(w)));
          g.backward(loss);
        };
        for (int i = 0; i < opt.warmup; ++i) time_once(body);
        std::vector<double> ts;
        ts.reserve(static_cast<std::size_t>(opt.reps));
        for (int i = 0; i < opt.reps; ++i) ts.push_back(time_once(body));
        BenchRow row{v.name, T, phase, median(std::move(ts)), recorded};
        if (progress)
          *progress << row.variant << " T=" << row.seq_len << " "
                    << row.phase << " " << row.seconds << "s\n";
        rows.push_back(std::move(row));
      }
    }
  }
  return rows;
}

void write_bench_csv(const std::vector<BenchRow>& rows, std::ostream& os) {
  os << "variant,seq_len,phase,seconds,workers\n";
  for (const BenchRow& r : rows)
    os << r.variant << ',' << r.seq_len << ',' << r.phase << ',' << r.seconds
       << ',' << r.workers << '\n';
}

}  // namespace rcrn
