// Copyright 2026 The rcrn Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "rcrn/errors.hpp"

namespace rcrn {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t e : s) n *= e;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << 'x';
    os << s[i];
  }
  os << ']';
  return os.str();
}

// Dense row-major tensor with a shared immutable payload. Copies are cheap
// (they share data); mutation goes through unshared_data(), which copies on
// write so published values are never disturbed.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape)
      : shape_(std::move(shape)),
        data_(std::make_shared<std::vector<T>>(shape_numel(shape_), T(0))) {}

  Tensor(Shape shape, std::vector<T> data)
      : shape_(std::move(shape)),
        data_(std::make_shared<std::vector<T>>(std::move(data))) {
    if (data_->size() != shape_numel(shape_)) {
      throw DimError("tensor: data length " + std::to_string(data_->size()) +
                     " does not match shape " + shape_str(shape_));
    }
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

  static Tensor full(Shape shape, T v) {
    Tensor t(std::move(shape));
    for (T& x : *t.data_) x = v;
    return t;
  }

  static Tensor scalar(T v) { return Tensor({1}, {v}); }

  static Tensor uniform(Shape shape, T lo, T hi, std::mt19937_64& rng) {
    Tensor t(std::move(shape));
    std::uniform_real_distribution<double> dist(static_cast<double>(lo),
                                                static_cast<double>(hi));
    for (T& x : *t.data_) x = static_cast<T>(dist(rng));
    return t;
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t extent(std::size_t axis) const { return shape_[axis]; }
  std::size_t size() const { return data_ ? data_->size() : 0; }
  bool empty() const { return !data_; }

  const T* data() const { return data_->data(); }

  // Copy-on-write access for construction-time fills and controlled pokes.
  T* unshared_data() {
    if (data_.use_count() > 1) data_ = std::make_shared<std::vector<T>>(*data_);
    return data_->data();
  }

  T operator[](std::size_t i) const { return (*data_)[i]; }

  T at2(std::size_t i, std::size_t j) const {
    return (*data_)[i * shape_[1] + j];
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  bool all_finite() const {
    for (const T& x : *data_)
      if (!std::isfinite(static_cast<double>(x))) return false;
    return true;
  }

  bool bit_equal(const Tensor& o) const {
    if (shape_ != o.shape_) return false;
    for (std::size_t i = 0; i < size(); ++i)
      if ((*data_)[i] != (*o.data_)[i]) return false;
    return true;
  }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(size());
    for (std::size_t i = 0; i < size(); ++i)
      out[i] = static_cast<U>((*data_)[i]);
    return Tensor<U>(shape_, std::move(out));
  }

 private:
  Shape shape_;
  std::shared_ptr<std::vector<T>> data_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

// Numerically stable logistic; output stays in (0,1) for inputs where
// exp does not underflow to zero.
template <typename T>
inline T stable_sigmoid(T x) {
  if (x >= T(0)) {
    T e = std::exp(-x);
    return T(1) / (T(1) + e);
  }
  T e = std::exp(x);
  return e / (T(1) + e);
}

inline void check_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (a != b) {
    throw DimError(std::string(op) + ": shape mismatch " + shape_str(a) +
                   " vs " + shape_str(b));
  }
}

}  // namespace rcrn
