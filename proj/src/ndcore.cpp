// Copyright 2026 The mvlip Authors
// SPDX-License-Identifier: Apache-2.0

#include "mvlip/ndcore.hpp"

#include <cmath>
#include <string>

namespace mvlip {

const char* to_string(FormatErrc code) {
  switch (code) {
    case FormatErrc::bad_magic: return "bad magic";
    case FormatErrc::unsupported_version: return "unsupported version";
    case FormatErrc::truncated: return "truncated file";
    case FormatErrc::invalid_view: return "invalid view";
    case FormatErrc::precision_mismatch: return "precision mismatch";
    case FormatErrc::malformed: return "malformed file";
    case FormatErrc::io: return "i/o error";
  }
  return "format error";
}

std::string_view to_string(Precision p) {
  return p == Precision::f32 ? "float" : "double";
}

Precision parse_precision(std::string_view text) {
  if (text == "float" || text == "f32" || text == "32") return Precision::f32;
  if (text == "double" || text == "f64" || text == "64") return Precision::f64;
  throw InvalidArgument("unknown precision '" + std::string(text) + "'");
}

template <typename T>
Matrix<T> glorot_init(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  if (fan_in == 0 || fan_out == 0) {
    throw InvalidArgument("glorot_init: fan_in and fan_out must be >= 1");
  }
  const double bound = glorot_bound(fan_in, fan_out);
  Matrix<T> w(fan_in, fan_out);
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    w.data()[i] = static_cast<T>(rng.uniform(-bound, bound));
  }
  return w;
}

template <typename T>
Matrix<T> normal_init(std::size_t rows, std::size_t cols, double stddev, Rng& rng) {
  Matrix<T> w(rows, cols);
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    w.data()[i] = static_cast<T>(stddev * rng.normal());
  }
  return w;
}

template <typename T>
Matrix<T> softmax(const Matrix<T>& logits) {
  Matrix<T> out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const T peak = logits.row(r).maxCoeff();
    out.row(r) = (logits.row(r).array() - peak).exp().matrix();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

template <typename T>
RowVector<T> softmax(const RowVector<T>& logits) {
  const T peak = logits.maxCoeff();
  RowVector<T> out = (logits.array() - peak).exp().matrix();
  return out / out.sum();
}

template <typename T>
Matrix<T> log_softmax(const Matrix<T>& logits) {
  Matrix<T> out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const T peak = logits.row(r).maxCoeff();
    const auto shifted = (logits.row(r).array() - peak).eval();
    out.row(r) = (shifted - std::log(shifted.exp().sum())).matrix();
  }
  return out;
}

template <typename T>
Matrix<T> matmul(const Matrix<T>& a, const Matrix<T>& b) {
  if (a.cols() != b.rows()) {
    throw InvalidArgument("matmul: shape mismatch (" + std::to_string(a.rows()) + "x" +
                          std::to_string(a.cols()) + ") * (" + std::to_string(b.rows()) +
                          "x" + std::to_string(b.cols()) + ")");
  }
  return a * b;
}

template <typename T>
Matrix<T> add_bias(const Matrix<T>& x, const RowVector<T>& bias) {
  if (x.cols() != bias.cols()) {
    throw InvalidArgument("add_bias: bias length " + std::to_string(bias.cols()) +
                          " does not match " + std::to_string(x.cols()) + " columns");
  }
  Matrix<T> out = x;
  out.rowwise() += bias;
  return out;
}

template <typename T>
Matrix<T> hadamard(const Matrix<T>& a, const Matrix<T>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw InvalidArgument("hadamard: shape mismatch");
  }
  return a.cwiseProduct(b);
}

#define MVLIP_INSTANTIATE(T)                                                     \
  template Matrix<T> glorot_init<T>(std::size_t, std::size_t, Rng&);             \
  template Matrix<T> normal_init<T>(std::size_t, std::size_t, double, Rng&);     \
  template Matrix<T> softmax<T>(const Matrix<T>&);                               \
  template RowVector<T> softmax<T>(const RowVector<T>&);                         \
  template Matrix<T> log_softmax<T>(const Matrix<T>&);                           \
  template Matrix<T> matmul<T>(const Matrix<T>&, const Matrix<T>&);              \
  template Matrix<T> add_bias<T>(const Matrix<T>&, const RowVector<T>&);         \
  template Matrix<T> hadamard<T>(const Matrix<T>&, const Matrix<T>&);

MVLIP_INSTANTIATE(float)
MVLIP_INSTANTIATE(double)

}  // namespace mvlip
