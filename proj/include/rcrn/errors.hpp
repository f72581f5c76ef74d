// Copyright 2026 The rcrn Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace rcrn {

// Shape disagreement between operands. Message names both shapes.
class DimError : public std::invalid_argument {
 public:
  explicit DimError(const std::string& what) : std::invalid_argument(what) {}
};

// Violated operation contract (e.g. non-scalar loss passed to backward).
class ContractError : public std::logic_error {
 public:
  explicit ContractError(const std::string& what) : std::logic_error(what) {}
};

// Malformed input data or file format (TSV, word vectors, checkpoints).
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Bad run configuration: unknown key, missing key, unparsable value.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Numerical failure: NaN gradients, diverged loss, failed gradient check.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace rcrn
