// Copyright 2026 The rcrn Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <cstddef>

namespace rcrn::detail {

template <typename T>
using MatMap =
    Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename T>
using ConstMatMap = Eigen::Map<
    const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

// C (m*n) = op(A) * op(B), optionally accumulating into C.
// A is m*k when !ta, k*m when ta; B is k*n when !tb, n*k when tb.
template <typename T>
void gemm(bool ta, bool tb, std::size_t m, std::size_t n, std::size_t k,
          const T* a, const T* b, T* c, bool accumulate) {
  ConstMatMap<T> A(a, ta ? k : m, ta ? m : k);
  ConstMatMap<T> B(b, tb ? n : k, tb ? k : n);
  MatMap<T> C(c, m, n);
  if (!ta && !tb) {
    if (accumulate) C.noalias() += A * B;
    else C.noalias() = A * B;
  } else if (!ta && tb) {
    if (accumulate) C.noalias() += A * B.transpose();
    else C.noalias() = A * B.transpose();
  } else if (ta && !tb) {
    if (accumulate) C.noalias() += A.transpose() * B;
    else C.noalias() = A.transpose() * B;
  } else {
    if (accumulate) C.noalias() += A.transpose() * B.transpose();
    else C.noalias() = A.transpose() * B.transpose();
  }
}

}  // namespace rcrn::detail
