// Copyright 2026 The rcrn Authors
// SPDX-License-Identifier: Apache-2.0

#include "rcrn/encoder.hpp"

#include <string>

namespace rcrn {

void validate_config(const EncoderConfig& cfg) {
  if (cfg.input_dim == 0) throw ConfigError("encoder: input_dim must be >= 1");
  if (cfg.hidden_dim == 0)
    throw ConfigError("encoder: hidden_dim must be >= 1");
  if (cfg.kind == EncoderKind::stacked_bilstm && cfg.layers == 0)
    throw ConfigError("encoder: stacked_bilstm needs layers >= 1");
}

std::size_t count_params(const EncoderConfig& cfg) {
  validate_config(cfg);
  const std::size_t d = cfg.hidden_dim;
  const std::size_t gates = cfg.atom == AtomKind::lstm ? 4 : 3;
  auto cell = [&](std::size_t in) { return gates * (d * in + d * d + d); };
  auto bi = [&](std::size_t in) { return 2 * cell(in); };
  switch (cfg.kind) {
    case EncoderKind::bilstm:
      return bi(cfg.input_dim);
    case EncoderKind::rcrn:
      // Two controller branches plus the listener, each bidirectional over
      // the raw input.
      return 3 * bi(cfg.input_dim);
    default: {
      std::size_t total = bi(cfg.input_dim);
      for (std::size_t l = 1; l < cfg.layers; ++l) total += bi(2 * d);
      return total;
    }
  }
}

BatchMask BatchMask::full(std::size_t batch, std::size_t steps) {
  BatchMask m;
  m.batch = batch;
  m.steps = steps;
  m.bits.assign(batch * steps, 1);
  m.lengths.assign(batch, steps);
  return m;
}

BatchMask BatchMask::from_lengths(const std::vector<std::size_t>& lens,
                                  std::size_t steps) {
  BatchMask m;
  m.batch = lens.size();
  m.steps = steps;
  m.bits.assign(m.batch * steps, 0);
  m.lengths = lens;
  for (std::size_t b = 0; b < m.batch; ++b) {
    if (lens[b] > steps)
      throw DataError("mask: length " + std::to_string(lens[b]) +
                      " exceeds steps " + std::to_string(steps));
    for (std::size_t t = 0; t < lens[b]; ++t) m.bits[b * steps + t] = 1;
  }
  return m;
}

void BatchMask::validate() const {
  if (bits.size() != batch * steps || lengths.size() != batch)
    throw DataError("mask: inconsistent extents");
  for (std::size_t b = 0; b < batch; ++b) {
    std::size_t run = 0;
    bool ended = false;
    for (std::size_t t = 0; t < steps; ++t) {
      std::uint8_t v = bits[b * steps + t];
      if (v != 0 && v != 1)
        throw DataError("mask: non-binary value at row " + std::to_string(b));
      if (v == 1) {
        if (ended)
          throw DataError("mask: row " + std::to_string(b) +
                          " is not prefix shaped (set bit after a gap)");
        ++run;
      } else {
        ended = true;
      }
    }
    if (run != lengths[b])
      throw DataError("mask: row " + std::to_string(b) + " has " +
                      std::to_string(run) + " set bits but declared length " +
                      std::to_string(lengths[b]));
  }
}

bool BatchMask::all_full() const {
  for (std::size_t l : lengths)
    if (l != steps) return false;
  return true;
}

}  // namespace rcrn
