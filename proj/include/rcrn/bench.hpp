// Copyright 2026 The rcrn Authors
// SPDX-License-Identifier: Apache-2.0
//
// Encoder runtime benchmark: four variants across a sequence-length sweep,
// timing inference (forward) and train (forward plus backward) phases on
// synthetic data in single precision. Before any cell is timed, the
// optimized scan is checked bit-for-bit against the naive scan so speed
// never trades off correctness.

#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace rcrn {

struct BenchRow {
  std::string variant;
  std::size_t seq_len = 0;
  std::string phase;  // "inference" or "train"
  double seconds = 0;
  unsigned workers = 1;
};

struct BenchOptions {
  std::vector<std::size_t> seq_lens{16, 32, 64, 128, 256};
  std::size_t batch = 32;
  std::size_t dim = 200;  // input width and per-direction hidden width
  unsigned workers = 4;   // lane workers for the optimized-scan variant
  int warmup = 3;
  int reps = 5;
  std::uint64_t seed = 1;
};

// Runs the full grid: {bilstm, 3l-bilstm, rcrn-naive-scan,
// rcrn-optimized-scan} x seq_lens x {inference, train}, median of `reps`
// timed passes after `warmup` untimed ones. When `progress` is non-null a
// line per cell is streamed to it.
std::vector<BenchRow> run_bench(const BenchOptions& opt,
                                std::ostream* progress = nullptr);

// CSV: variant,seq_len,phase,seconds,workers
void write_bench_csv(const std::vector<BenchRow>& rows, std::ostream& os);

}  // namespace rcrn
