// Copyright 2026 The mvlip Authors
// SPDX-License-Identifier: Apache-2.0

// Gaussian-visible RBMs for greedy layer-wise encoder initialisation.
// Visible units have unit variance (inputs are z-normalised), so the
// reconstruction is the visible mean h W^T + b_v. Hidden units are either
// noisy rectified linear (sampled as max(0, x + N(0, sigmoid(x)))) or linear
// with unit-variance Gaussian noise.

#pragma once

#include <cstddef>
#include <vector>

#include "mvlip/model.hpp"
#include "mvlip/ndcore.hpp"

namespace mvlip {

enum class HiddenKind { noisy_relu, linear };

template <typename T>
struct GaussianRbm {
  Matrix<T> weight;  // visible x hidden
  RowVector<T> visible_bias;
  RowVector<T> hidden_bias;
  HiddenKind hidden_kind = HiddenKind::noisy_relu;

  std::size_t visible_size() const { return static_cast<std::size_t>(weight.rows()); }
  std::size_t hidden_size() const { return static_cast<std::size_t>(weight.cols()); }
};

/// Running parameter increments for momentum.
template <typename T>
struct RbmVelocity {
  Matrix<T> weight;
  RowVector<T> visible_bias;
  RowVector<T> hidden_bias;

  static RbmVelocity zeros_for(const GaussianRbm<T>& rbm);
};

struct MomentumSchedule {
  double early = 0.5;
  double late = 0.9;
  std::size_t switch_epoch = 5;  // first epoch (0-based) using `late`

  double at(std::size_t epoch) const { return epoch < switch_epoch ? early : late; }
};

struct CdConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 100;
  double l2 = 0.0002;
  double lr = 0.001;
  std::size_t cd_steps = 1;
  MomentumSchedule momentum;
  double init_stddev = 0.01;

  void validate() const;
};

/// Weights N(0, init_stddev^2), zero biases.
template <typename T>
GaussianRbm<T> make_rbm(std::size_t visible, std::size_t hidden, HiddenKind kind,
                        double init_stddev, Rng& rng);

/// Deterministic hidden activation: relu(v W + b_h) or v W + b_h.
template <typename T>
Matrix<T> hidden_mean(const GaussianRbm<T>& rbm, const Matrix<T>& visible);

/// One CD-k step on `batch` (rows are samples). Momentum follows
/// cfg.momentum at `epoch`. Returns the mean squared reconstruction error of
/// the batch.
template <typename T>
double cd_update(GaussianRbm<T>& rbm, RbmVelocity<T>& velocity, const Matrix<T>& batch,
                 const CdConfig& cfg, std::size_t epoch, Rng& rng);

/// Runs cfg.epochs epochs of shuffled mini-batches and returns the mean
/// reconstruction error of each epoch.
template <typename T>
std::vector<double> train_rbm(GaussianRbm<T>& rbm, const Matrix<T>& data, const CdConfig& cfg,
                              Rng& rng);

template <typename T>
struct PretrainResult {
  EncoderParams<T> encoder;
  std::vector<std::vector<double>> reconstruction_errors;  // per layer, per epoch
};

/// Trains RBM k on the mean activations of RBM k-1. `layer_sizes` holds the
/// three rectified hidden widths followed by the linear bottleneck width.
template <typename T>
PretrainResult<T> pretrain_stack(const Matrix<T>& data, const std::vector<std::size_t>& layer_sizes,
                                 const CdConfig& cfg, Rng& rng);

}  // namespace mvlip
