// Copyright 2026 The mvlip Authors
// SPDX-License-Identifier: Apache-2.0

#include "mvlip/train.hpp"

#include <algorithm>
#include <numeric>

#include <json.hpp>

namespace mvlip {

void TrainConfig::validate() const {
  auto rate_ok = [](double r) { return std::isfinite(r) && r >= 0.0; };
  if (!rate_ok(lr_single) || !rate_ok(lr_fusion)) {
    throw InvalidArgument("train: learning rates must be finite and non-negative");
  }
  if (batch_utterances == 0) throw InvalidArgument("train: batch_utterances must be >= 1");
  if (early_stop_delay == 0) throw InvalidArgument("train: early_stop_delay must be >= 1");
  if (!(clip_magnitude > 0.0)) throw InvalidArgument("train: clip magnitude must be > 0");
  if (max_epochs == 0) throw InvalidArgument("train: max_epochs must be >= 1");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0) ||
      !(adam.eps > 0.0)) {
    throw InvalidArgument("train: invalid Adam hyperparameters");
  }
}

template <typename T>
LossResult<T> frame_cross_entropy(const Matrix<T>& logits, std::size_t label,
                                  const std::vector<bool>& mask) {
  if (label >= static_cast<std::size_t>(logits.cols())) {
    throw InvalidArgument("frame_cross_entropy: label " + std::to_string(label) + " outside " +
                          std::to_string(logits.cols()) + " classes");
  }
  if (!mask.empty() && mask.size() != static_cast<std::size_t>(logits.rows())) {
    throw InvalidArgument("frame_cross_entropy: mask length does not match frame count");
  }
  LossResult<T> out;
  out.d_logits = Matrix<T>::Zero(logits.rows(), logits.cols());
  std::vector<Eigen::Index> rows;
  for (Eigen::Index t = 0; t < logits.rows(); ++t) {
    if (mask.empty() || mask[static_cast<std::size_t>(t)]) rows.push_back(t);
  }
  if (rows.empty()) throw InvalidArgument("frame_cross_entropy: every frame is masked");
  const T scale = T(1) / static_cast<T>(rows.size());
  const Matrix<T> lp = log_softmax(logits);
  double total = 0.0;
  for (const Eigen::Index t : rows) {
    total -= static_cast<double>(lp(t, static_cast<Eigen::Index>(label)));
    auto g = out.d_logits.row(t);
    g = lp.row(t).array().exp().matrix() * scale;
    g(static_cast<Eigen::Index>(label)) -= scale;
  }
  out.loss = total / static_cast<double>(rows.size());
  return out;
}

template <typename T>
LossResult<T> batch_cross_entropy(const Matrix<T>& logits, const SequenceLayout& layout,
                                  std::span<const std::size_t> labels) {
  if (labels.size() != layout.size() || layout.size() == 0) {
    throw InvalidArgument("batch_cross_entropy: label count does not match the batch");
  }
  if (static_cast<std::size_t>(logits.rows()) != layout.total_frames) {
    throw InvalidArgument("batch_cross_entropy: logits do not match the layout");
  }
  LossResult<T> out;
  out.d_logits.resize(logits.rows(), logits.cols());
  const double n = static_cast<double>(layout.size());
  for (std::size_t b = 0; b < layout.size(); ++b) {
    LossResult<T> one = frame_cross_entropy<T>(rows_of(logits, layout, b), labels[b]);
    out.loss += one.loss / n;
    out.d_logits.middleRows(layout.offsets[b], layout.lengths[b]) =
        one.d_logits / static_cast<T>(layout.size());
  }
  return out;
}

EarlyStopper::EarlyStopper(std::size_t delay) : delay_(delay) {
  if (delay == 0) throw InvalidArgument("EarlyStopper: delay must be >= 1");
}

bool EarlyStopper::update(double validation_loss) {
  ++epoch_;
  if (validation_loss < best_loss_) {
    best_loss_ = validation_loss;
    best_epoch_ = epoch_;
  }
  return epoch_ - best_epoch_ >= delay_;
}

std::string to_jsonl(const RunRecord& record) {
  using nlohmann::ordered_json;
  std::string out;
  for (const EpochRecord& e : record.epochs) {
    ordered_json j;
    j["epoch"] = e.epoch;
    j["train_loss"] = e.train_loss;
    j["val_loss"] = e.val_loss;
    j["val_accuracy"] = e.val_accuracy;
    out += j.dump() + '\n';
  }
  ordered_json s;
  s["summary"] = true;
  s["seed"] = record.seed;
  s["stopped_epoch"] = record.stopped_epoch;
  s["best_epoch"] = record.best_epoch;
  s["early_stopped"] = record.early_stopped;
  if (record.test) {
    s["test_loss"] = record.test->loss;
    s["test_accuracy"] = record.test->accuracy;
  }
  s["config"] = record.config;
  out += s.dump() + '\n';
  return out;
}

template <typename T>
PackedInputs<T> pack_examples(const std::vector<Example<T>>& examples,
                              std::span<const std::size_t> indices,
                              const std::vector<ViewId>& views) {
  if (indices.empty()) throw InvalidArgument("pack_examples: no examples selected");
  std::vector<std::size_t> lengths;
  lengths.reserve(indices.size());
  for (const std::size_t i : indices) lengths.push_back(examples.at(i).length());
  PackedInputs<T> out;
  out.layout = SequenceLayout::from_lengths(lengths);
  for (const ViewId view : views) {
    const Example<T>& first = examples[indices[0]];
    auto it = first.views.find(view);
    if (it == first.views.end()) {
      throw ViewMismatch("dataset has no frames for view " + to_string(view));
    }
    Matrix<T> packed(static_cast<Eigen::Index>(out.layout.total_frames), it->second.cols());
    for (std::size_t b = 0; b < indices.size(); ++b) {
      const Example<T>& ex = examples[indices[b]];
      auto found = ex.views.find(view);
      if (found == ex.views.end()) {
        throw ViewMismatch("example of subject " + std::to_string(ex.subject) +
                           " has no frames for view " + to_string(view));
      }
      if (static_cast<std::size_t>(found->second.rows()) != lengths[b] ||
          found->second.cols() != packed.cols()) {
        throw DataError("example of subject " + std::to_string(ex.subject) +
                        " has inconsistent frame shapes across views");
      }
      packed.middleRows(out.layout.offsets[b], lengths[b]) = found->second;
    }
    out.frames.emplace(view, std::move(packed));
  }
  return out;
}

namespace {

template <typename T>
std::vector<ViewId> model_views(const StreamParams<T>& m) {
  return {m.view};
}
template <typename T>
std::vector<ViewId> model_views(const MultiViewParams<T>& m) {
  return m.views();
}

constexpr std::size_t kEvalChunk = 64;

template <typename Model, typename T>
EvalResult evaluate_impl(const Model& model, const std::vector<Example<T>>& examples) {
  if (examples.empty()) throw InvalidArgument("evaluate: no examples");
  const std::vector<ViewId> views = model_views(model);
  EvalResult out;
  for (std::size_t start = 0; start < examples.size(); start += kEvalChunk) {
    const std::size_t end = std::min(examples.size(), start + kEvalChunk);
    std::vector<std::size_t> idx(end - start);
    std::iota(idx.begin(), idx.end(), start);
    const PackedInputs<T> inputs = pack_examples(examples, idx, views);
    const Matrix<T> logits = forward_logits(model, inputs);
    for (std::size_t b = 0; b < idx.size(); ++b) {
      const Example<T>& ex = examples[idx[b]];
      const Matrix<T> rows = rows_of(logits, inputs.layout, b);
      out.loss += frame_cross_entropy<T>(rows, ex.label).loss;
      out.predictions.subjects.push_back(ex.subject);
      out.predictions.labels.push_back(ex.label);
      out.predictions.predicted.push_back(decode_utterance(rows));
    }
  }
  out.loss /= static_cast<double>(examples.size());
  out.accuracy = out.predictions.accuracy();
  return out;
}

template <typename Model, typename T>
std::pair<Model, RunRecord> train_loop(Model model, const DatasetSplits<T>& data,
                                       const TrainConfig& cfg, double lr) {
  cfg.validate();
  if (data.train.empty()) throw InvalidArgument("train: the training split is empty");
  if (data.val.empty()) throw InvalidArgument("train: the validation split is empty");
  const std::vector<ViewId> views = model_views(model);
  for (const ViewId v : views) {
    if (!data.train.front().views.contains(v)) {
      throw ViewMismatch("train: dataset has no frames for model view " + to_string(v));
    }
  }

  RunRecord record;
  record.seed = cfg.seed;
  Rng rng = Rng(cfg.seed).fork(0x5348554646ULL);
  std::vector<std::size_t> order(data.train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  AdamState<Model> adam = AdamState<Model>::for_model(model);
  Model grad = zeros_like(model);
  Model best = model;
  EarlyStopper stopper(cfg.early_stop_delay);
  std::vector<std::size_t> labels;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    rng.shuffle(order);
    double train_loss = 0.0;
    std::size_t batch_no = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_utterances, ++batch_no) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_utterances);
      const std::span<const std::size_t> idx(order.data() + start, end - start);
      try {
        const PackedInputs<T> inputs = pack_examples(data.train, idx, views);
        labels.clear();
        for (const std::size_t i : idx) labels.push_back(data.train[i].label);
        ModelTrace<T> trace;
        const Matrix<T> logits = forward_logits(model, inputs, &trace);
        const LossResult<T> loss = batch_cross_entropy<T>(logits, inputs.layout, labels);
        if (!std::isfinite(loss.loss)) throw NumericFailure("non-finite training loss");
        for_each_tensor([](const std::string&, TensorInfo, auto& g) { g.setZero(); }, grad);
        backward(model, trace, loss.d_logits, grad);
        clip_lstm_gradients(grad, cfg.clip_magnitude);
        adam_step(model, grad, adam, lr, cfg.adam);
        train_loss += loss.loss * static_cast<double>(idx.size());
      } catch (const NumericFailure& err) {
        throw NumericFailure("epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(batch_no + 1) + ": " + err.what());
      }
    }
    const EvalResult val = evaluate_impl(model, data.val);
    record.epochs.push_back(
        {epoch, train_loss / static_cast<double>(order.size()), val.loss, val.accuracy});
    const bool stop = stopper.update(val.loss);
    if (stopper.improved()) best = model;
    record.stopped_epoch = epoch;
    if (stop) {
      record.early_stopped = true;
      break;
    }
  }
  record.best_epoch = stopper.best_epoch();
  if (record.best_epoch == 0) {
    throw NumericFailure("train: validation loss was never finite");
  }
  if (!data.test.empty()) record.test = evaluate_impl(best, data.test);
  return {std::move(best), std::move(record)};
}

}  // namespace

template <typename T>
EvalResult evaluate(const StreamParams<T>& model, const std::vector<Example<T>>& examples) {
  return evaluate_impl(model, examples);
}

template <typename T>
EvalResult evaluate(const MultiViewParams<T>& model, const std::vector<Example<T>>& examples) {
  return evaluate_impl(model, examples);
}

template <typename T>
std::pair<StreamParams<T>, RunRecord> train_single_stream(StreamParams<T> stream,
                                                          const DatasetSplits<T>& data,
                                                          const TrainConfig& cfg) {
  if (!stream.head) throw InvalidArgument("train_single_stream: stream has no softmax head");
  return train_loop(std::move(stream), data, cfg, cfg.lr_single);
}

template <typename T>
std::pair<MultiViewParams<T>, RunRecord> train_multiview(MultiViewParams<T> model,
                                                         const DatasetSplits<T>& data,
                                                         const TrainConfig& cfg) {
  return train_loop(std::move(model), data, cfg, cfg.lr_fusion);
}

#define MVLIP_INSTANTIATE(T)                                                                    \
  template LossResult<T> frame_cross_entropy<T>(const Matrix<T>&, std::size_t,                  \
                                                const std::vector<bool>&);                      \
  template LossResult<T> batch_cross_entropy<T>(const Matrix<T>&, const SequenceLayout&,        \
                                                std::span<const std::size_t>);                  \
  template PackedInputs<T> pack_examples<T>(const std::vector<Example<T>>&,                     \
                                            std::span<const std::size_t>,                       \
                                            const std::vector<ViewId>&);                        \
  template EvalResult evaluate<T>(const StreamParams<T>&, const std::vector<Example<T>>&);      \
  template EvalResult evaluate<T>(const MultiViewParams<T>&, const std::vector<Example<T>>&);   \
  template std::pair<StreamParams<T>, RunRecord> train_single_stream<T>(                        \
      StreamParams<T>, const DatasetSplits<T>&, const TrainConfig&);                            \
  template std::pair<MultiViewParams<T>, RunRecord> train_multiview<T>(                         \
      MultiViewParams<T>, const DatasetSplits<T>&, const TrainConfig&);

MVLIP_INSTANTIATE(float)
MVLIP_INSTANTIATE(double)

}  // namespace mvlip
