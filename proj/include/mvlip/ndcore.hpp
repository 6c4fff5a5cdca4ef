// Copyright 2026 The mvlip Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <optional>
#include <string_view>

#include <Eigen/Core>

#include "mvlip/errors.hpp"
#include "mvlip/rng.hpp"

namespace mvlip {

/// Row-major dense matrix. Sequences are stored one frame per row.
template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
using RowVector = Eigen::Matrix<T, 1, Eigen::Dynamic>;

using MatrixF = Matrix<float>;
using MatrixD = Matrix<double>;

enum class Precision : std::uint8_t { f32 = 1, f64 = 2 };

template <typename T>
constexpr Precision precision_of();
template <>
constexpr Precision precision_of<float>() { return Precision::f32; }
template <>
constexpr Precision precision_of<double>() { return Precision::f64; }

std::string_view to_string(Precision p);
Precision parse_precision(std::string_view text);

/// Uniform in [-L, L] with L = sqrt(6 / (fan_in + fan_out)), shape fan_in x fan_out.
template <typename T>
Matrix<T> glorot_init(std::size_t fan_in, std::size_t fan_out, Rng& rng);

inline double glorot_bound(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

template <typename T>
Matrix<T> normal_init(std::size_t rows, std::size_t cols, double stddev, Rng& rng);

template <typename T>
Matrix<T> relu(const Matrix<T>& x) {
  return x.cwiseMax(T(0));
}

/// Derivative of relu evaluated from its output (or input): 1 where positive.
template <typename T>
Matrix<T> relu_grad(const Matrix<T>& x) {
  return (x.array() > T(0)).template cast<T>().matrix();
}

template <typename T>
const Matrix<T>& identity(const Matrix<T>& x) {
  return x;
}

/// Row-wise softmax with max subtraction.
template <typename T>
Matrix<T> softmax(const Matrix<T>& logits);

template <typename T>
RowVector<T> softmax(const RowVector<T>& logits);

/// Row-wise log-softmax, stable for large logits.
template <typename T>
Matrix<T> log_softmax(const Matrix<T>& logits);

template <typename T>
Matrix<T> matmul(const Matrix<T>& a, const Matrix<T>& b);

template <typename T>
Matrix<T> add_bias(const Matrix<T>& x, const RowVector<T>& bias);

template <typename T>
Matrix<T> hadamard(const Matrix<T>& a, const Matrix<T>& b);

/// Row index of the first non-finite entry, if any.
template <typename Derived>
std::optional<std::size_t> first_nonfinite_row(const Eigen::MatrixBase<Derived>& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    if (!m.row(r).allFinite()) return static_cast<std::size_t>(r);
  }
  return std::nullopt;
}

/// Throws NumericFailure naming `what` when `m` holds NaN or infinity.
template <typename Derived>
void require_finite(const Eigen::MatrixBase<Derived>& m, std::string_view what) {
  if (!m.allFinite()) {
    throw NumericFailure("non-finite values in " + std::string(what));
  }
}

}  // namespace mvlip
