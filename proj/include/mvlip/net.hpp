// Copyright 2026 The mvlip Authors
// SPDX-License-Identifier: Apache-2.0

// Differentiable layers with hand-written backward passes. Sequences travel
// through the layers "packed": the valid frames of every utterance stacked
// into one matrix, one frame per row, addressed by a SequenceLayout. Padding
// never enters a packed matrix, so it cannot leak into outputs or gradients.

#pragma once

#include <cstddef>
#include <vector>

#include "mvlip/ndcore.hpp"

namespace mvlip {

enum class Activation { relu, linear };

template <typename T>
struct DenseLayer {
  Matrix<T> weight;  // inputs x outputs
  RowVector<T> bias;
  Activation activation = Activation::relu;

  std::size_t input_size() const { return static_cast<std::size_t>(weight.rows()); }
  std::size_t output_size() const { return static_cast<std::size_t>(weight.cols()); }
};

template <typename T>
DenseLayer<T> make_dense(std::size_t inputs, std::size_t outputs, Activation act, Rng& rng);

/// y = act(x W + b), one frame per row of x.
template <typename T>
Matrix<T> dense_forward(const DenseLayer<T>& layer, const Matrix<T>& x);

/// Adds dW and db into `grad` and returns dx (empty when `input_grad` is
/// false). `y` is the output of dense_forward for the same `x`.
template <typename T>
Matrix<T> dense_backward(const DenseLayer<T>& layer, const Matrix<T>& x, const Matrix<T>& y,
                         const Matrix<T>& dy, DenseLayer<T>& grad, bool input_grad = true);

/// Class distribution per row: softmax(x W + b).
template <typename T>
Matrix<T> softmax_head(const DenseLayer<T>& head, const Matrix<T>& x);

struct DeltaConfig {
  std::size_t window = 2;  // regression half-width
  void validate() const;
};

/// Windowed regression d_t = sum_k k (c_{t+k} - c_{t-k}) / (2 sum_k k^2),
/// out-of-range frames replaced by the first/last frame.
template <typename T>
Matrix<T> delta_regression(const Matrix<T>& seq, std::size_t window);

/// Exact transpose of delta_regression.
template <typename T>
Matrix<T> delta_regression_transpose(const Matrix<T>& grad, std::size_t window);

/// T x D -> T x 3D, rows [c_t, delta_t, delta-delta_t].
template <typename T>
Matrix<T> delta_features(const Matrix<T>& seq, const DeltaConfig& cfg);

/// T x 3D -> T x D.
template <typename T>
Matrix<T> delta_backward(const Matrix<T>& d_out, const DeltaConfig& cfg);

/// Frame counts and row offsets of utterances stacked in a packed matrix.
struct SequenceLayout {
  std::vector<std::size_t> lengths;
  std::vector<std::size_t> offsets;
  std::size_t total_frames = 0;

  static SequenceLayout from_lengths(std::vector<std::size_t> lengths);
  std::size_t size() const { return lengths.size(); }
  bool operator==(const SequenceLayout&) const = default;
};

/// Utterances padded to a common length. Row t of frames[b] is valid iff
/// t < lengths[b].
template <typename T>
struct SequenceBatch {
  std::vector<Matrix<T>> frames;
  std::vector<std::size_t> lengths;

  static SequenceBatch from_sequences(const std::vector<Matrix<T>>& sequences);

  std::size_t size() const { return lengths.size(); }
  std::size_t max_length() const;
  std::size_t dim() const;
  bool valid(std::size_t utterance, std::size_t frame) const {
    return frame < lengths.at(utterance);
  }
  std::vector<std::vector<bool>> mask() const;
  SequenceLayout layout() const { return SequenceLayout::from_lengths(lengths); }
};

/// Stacks the valid frames of every utterance.
template <typename T>
Matrix<T> pack(const SequenceBatch<T>& batch);

/// Splits a packed matrix back into one matrix per utterance.
template <typename T>
std::vector<Matrix<T>> unpack(const Matrix<T>& packed, const SequenceLayout& layout);

template <typename T>
Matrix<T> rows_of(const Matrix<T>& packed, const SequenceLayout& layout, std::size_t utterance) {
  return packed.middleRows(layout.offsets[utterance], layout.lengths[utterance]);
}

enum class Gate { input = 0, forget = 1, output = 2, candidate = 3 };

/// Standard LSTM without peepholes. The four gate blocks are stored side by
/// side in the order of Gate, H columns each.
template <typename T>
struct LstmParams {
  Matrix<T> w_input;   // inputs x 4H
  Matrix<T> w_hidden;  // H x 4H
  RowVector<T> bias;   // 4H

  std::size_t input_size() const { return static_cast<std::size_t>(w_input.rows()); }
  std::size_t hidden_size() const { return static_cast<std::size_t>(w_hidden.rows()); }
};

/// Glorot-initialised gate blocks, zero biases except `forget_bias` on the
/// forget gate.
template <typename T>
LstmParams<T> make_lstm(std::size_t inputs, std::size_t hidden, Rng& rng, T forget_bias = T(1));

template <typename T>
struct BlstmParams {
  LstmParams<T> forward;
  LstmParams<T> backward;

  std::size_t input_size() const { return forward.input_size(); }
  std::size_t hidden_size() const { return forward.hidden_size(); }
  std::size_t output_size() const { return 2 * forward.hidden_size(); }
};

template <typename T>
BlstmParams<T> make_blstm(std::size_t inputs, std::size_t hidden, Rng& rng, T forget_bias = T(1));

template <typename T>
struct LstmTrace {
  Matrix<T> gates;  // activated gate values per frame
  Matrix<T> cell;
  Matrix<T> cell_tanh;
  Matrix<T> hidden;
};

template <typename T>
struct BlstmCache {
  Matrix<T> input;
  SequenceLayout layout;
  LstmTrace<T> forward;
  LstmTrace<T> backward;
};

/// Packed N x in -> packed N x 2H, row = [forward_t ; backward_t]. The
/// recurrence restarts at every utterance boundary.
template <typename T>
Matrix<T> blstm_forward(const BlstmParams<T>& params, const Matrix<T>& x,
                        const SequenceLayout& layout, BlstmCache<T>* cache = nullptr);

/// Backpropagation through time. Adds parameter gradients into `grad` and
/// returns the gradient with respect to the packed input.
template <typename T>
Matrix<T> blstm_backward(const BlstmParams<T>& params, const BlstmCache<T>& cache,
                         const Matrix<T>& d_out, BlstmParams<T>& grad);

/// Padded convenience form; padded output rows are zero.
template <typename T>
SequenceBatch<T> blstm_forward(const BlstmParams<T>& params, const SequenceBatch<T>& batch);

}  // namespace mvlip
