// Copyright 2026 The mvlip Authors
// SPDX-License-Identifier: Apache-2.0

// Frame-level cross-entropy, Adam, LSTM gradient clipping, early stopping and
// the two supervised training procedures (single stream, joint multi-view).

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mvlip/data.hpp"
#include "mvlip/metrics.hpp"
#include "mvlip/model.hpp"

namespace mvlip {

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct TrainConfig {
  double lr_single = 3e-4;
  double lr_fusion = 1e-4;
  std::size_t batch_utterances = 10;
  std::size_t early_stop_delay = 5;
  double clip_magnitude = 5.0;
  AdamHyper adam;
  std::size_t max_epochs = 100;
  std::uint64_t seed = 0;

  void validate() const;
};

template <typename T>
struct LossResult {
  double loss = 0.0;
  Matrix<T> d_logits;
};

/// Mean negative log-probability of `label` over the unmasked frames of one
/// utterance. An empty mask means every frame is valid; masked rows get a zero
/// gradient and never enter the loss.
template <typename T>
LossResult<T> frame_cross_entropy(const Matrix<T>& logits, std::size_t label,
                                  const std::vector<bool>& mask = {});

/// Per-utterance frame_cross_entropy averaged over the utterances of a packed
/// batch.
template <typename T>
LossResult<T> batch_cross_entropy(const Matrix<T>& logits, const SequenceLayout& layout,
                                  std::span<const std::size_t> labels);

/// Bias-corrected Adam on one tensor.
template <typename P, typename G, typename M>
void adam_update(P&& param, const G& grad, M& m, M& v, std::size_t step, double lr,
                 const AdamHyper& hyper) {
  using Scalar = typename std::decay_t<P>::Scalar;
  const Scalar b1 = static_cast<Scalar>(hyper.beta1);
  const Scalar b2 = static_cast<Scalar>(hyper.beta2);
  m.array() = b1 * m.array() + (Scalar(1) - b1) * grad.array();
  v.array() = b2 * v.array() + (Scalar(1) - b2) * grad.array().square();
  const double c1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(step));
  param.array() -= static_cast<Scalar>(lr) * (m.array() / static_cast<Scalar>(c1)) /
                   ((v.array() / static_cast<Scalar>(c2)).sqrt() + static_cast<Scalar>(hyper.eps));
}

template <typename Model>
struct AdamState {
  Model m;
  Model v;
  std::size_t step = 0;

  static AdamState for_model(const Model& model) { return {zeros_like(model), zeros_like(model), 0}; }
};

template <typename Model>
void adam_step(Model& params, const Model& grads, AdamState<Model>& state, double lr,
               const AdamHyper& hyper) {
  ++state.step;
  for_each_tensor(
      [&](const std::string&, TensorInfo, auto& p, const auto& g, auto& m, auto& v) {
        adam_update(p, g, m, v, state.step, lr, hyper);
      },
      params, grads, state.m, state.v);
}

/// Clamps every LSTM-layer gradient entry to [-magnitude, magnitude].
template <typename Model>
void clip_lstm_gradients(Model& grads, double magnitude) {
  if (!(magnitude > 0.0)) throw InvalidArgument("clip_lstm_gradients: magnitude must be > 0");
  for_each_tensor(
      [&](const std::string&, TensorInfo info, auto& g) {
        if (!info.lstm) return;
        using Scalar = typename std::decay_t<decltype(g)>::Scalar;
        const Scalar c = static_cast<Scalar>(magnitude);
        g = g.cwiseMax(-c).cwiseMin(c);
      },
      grads);
}

/// Watches validation losses, one call per epoch (epochs count from 1). Only
/// a strictly lower loss is an improvement; stop is requested once `delay`
/// consecutive epochs fail to improve.
class EarlyStopper {
 public:
  explicit EarlyStopper(std::size_t delay);

  bool update(double validation_loss);  // true: stop now
  std::size_t best_epoch() const { return best_epoch_; }
  double best_loss() const { return best_loss_; }
  std::size_t epoch() const { return epoch_; }
  bool improved() const { return best_epoch_ == epoch_ && epoch_ > 0; }

 private:
  std::size_t delay_;
  std::size_t epoch_ = 0;
  std::size_t best_epoch_ = 0;
  double best_loss_ = INFINITY;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
};

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
  Predictions predictions;
};

struct RunRecord {
  std::vector<EpochRecord> epochs;
  std::size_t stopped_epoch = 0;
  std::size_t best_epoch = 0;
  bool early_stopped = false;
  std::optional<EvalResult> test;
  std::uint64_t seed = 0;
  std::string config;  // effective key = value snapshot
};

/// One JSON object per epoch followed by a summary object.
std::string to_jsonl(const RunRecord& record);

/// Stacks the given examples of every view into packed model inputs.
template <typename T>
PackedInputs<T> pack_examples(const std::vector<Example<T>>& examples,
                              std::span<const std::size_t> indices,
                              const std::vector<ViewId>& views);

/// Loss, accuracy and utterance predictions over `examples`.
template <typename T>
EvalResult evaluate(const StreamParams<T>& model, const std::vector<Example<T>>& examples);
template <typename T>
EvalResult evaluate(const MultiViewParams<T>& model, const std::vector<Example<T>>& examples);

/// Adam at cfg.lr_single on the stream's view; the best-validation weights
/// are returned. RunRecord::test is filled when the dataset has a test split.
template <typename T>
std::pair<StreamParams<T>, RunRecord> train_single_stream(StreamParams<T> stream,
                                                          const DatasetSplits<T>& data,
                                                          const TrainConfig& cfg);

/// Joint fine-tuning of every stream and the fusion layers at cfg.lr_fusion.
template <typename T>
std::pair<MultiViewParams<T>, RunRecord> train_multiview(MultiViewParams<T> model,
                                                         const DatasetSplits<T>& data,
                                                         const TrainConfig& cfg);

}  // namespace mvlip
