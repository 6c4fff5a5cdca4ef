// Copyright 2026 The mvlip Authors
// SPDX-License-Identifier: Apache-2.0

// Single-view streams (encoder -> delta append -> BLSTM -> softmax) and the
// multi-view model that fuses stream BLSTM outputs with a second BLSTM.

#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <type_traits>
#include <vector>

#include "mvlip/ndcore.hpp"
#include "mvlip/net.hpp"
#include "mvlip/view.hpp"

namespace mvlip {

struct ModelConfig {
  std::vector<ViewId> views;
  std::map<ViewId, FrameSize> frame_sizes;  // falls back to roi_size()
  std::array<std::size_t, 3> encoder_sizes{2000, 1000, 500};
  std::size_t bottleneck_dim = 50;
  std::size_t stream_hidden = 250;
  std::size_t fusion_hidden = 250;
  std::size_t num_classes = 10;
  DeltaConfig delta;
  double forget_bias = 1.0;

  FrameSize frame_size(ViewId view) const;
  std::size_t input_dim(ViewId view) const { return frame_size(view).pixels(); }
  /// [input, 3 hidden sizes, bottleneck].
  std::vector<std::size_t> encoder_widths(ViewId view) const;
  void validate() const;
};

template <typename T>
struct EncoderParams {
  std::vector<DenseLayer<T>> layers;  // relu hidden layers then a linear bottleneck

  std::size_t input_size() const { return layers.front().input_size(); }
  std::size_t output_size() const { return layers.back().output_size(); }
};

template <typename T>
struct StreamParams {
  ViewId view = ViewId::from_degrees(0);
  EncoderParams<T> encoder;
  DeltaConfig delta;
  BlstmParams<T> blstm;
  std::optional<DenseLayer<T>> head;  // only while trained as a standalone stream
};

template <typename T>
struct MultiViewParams {
  std::map<ViewId, StreamParams<T>> streams;  // heads removed
  BlstmParams<T> fusion;
  DenseLayer<T> head;

  std::vector<ViewId> views() const;
};

template <typename T>
EncoderParams<T> make_encoder(const std::vector<std::size_t>& widths, Rng& rng);

/// Stream for `view`: pretrained encoder if given, otherwise glorot; BLSTM and
/// head always glorot.
template <typename T>
StreamParams<T> build_stream(const ModelConfig& cfg, ViewId view,
                             const std::optional<EncoderParams<T>>& pretrained, Rng& rng);

/// Copies the streams named in cfg.views (dropping their heads) and adds a
/// glorot-initialised fusion BLSTM and softmax head.
template <typename T>
MultiViewParams<T> build_multiview(const std::map<ViewId, StreamParams<T>>& single_streams,
                                   const ModelConfig& cfg, Rng& rng);

/// Throws ViewMismatch listing both angle sets when they differ.
void require_views(const std::vector<ViewId>& model_views, const std::vector<ViewId>& requested,
                   const std::string& context);

template <typename T>
using ViewInputs = std::map<ViewId, SequenceBatch<T>>;

/// Per-view packed frames sharing one layout.
template <typename T>
struct PackedInputs {
  std::map<ViewId, Matrix<T>> frames;
  SequenceLayout layout;

  std::vector<ViewId> views() const;
};

/// Packs every view; per-utterance frame counts must agree across views.
template <typename T>
PackedInputs<T> pack_inputs(const ViewInputs<T>& inputs);

template <typename T>
struct StreamTrace {
  std::vector<Matrix<T>> activations;  // encoder input, then each layer output
  Matrix<T> features;                  // bottleneck with deltas appended
  BlstmCache<T> blstm;
  Matrix<T> output;
};

template <typename T>
struct ModelTrace {
  SequenceLayout layout;
  std::map<ViewId, StreamTrace<T>> streams;
  BlstmCache<T> fusion;
  Matrix<T> head_input;
  Matrix<T> logits;
};

template <typename T>
StreamTrace<T> stream_forward(const StreamParams<T>& stream, const Matrix<T>& packed_frames,
                              const SequenceLayout& layout);

template <typename T>
void stream_backward(const StreamParams<T>& stream, const StreamTrace<T>& trace,
                     const SequenceLayout& layout, const Matrix<T>& d_output,
                     StreamParams<T>& grad);

/// Packed per-frame logits. Fills `trace` when given (needed for backward).
template <typename T>
Matrix<T> forward_logits(const StreamParams<T>& model, const PackedInputs<T>& inputs,
                         ModelTrace<T>* trace = nullptr);
template <typename T>
Matrix<T> forward_logits(const MultiViewParams<T>& model, const PackedInputs<T>& inputs,
                         ModelTrace<T>* trace = nullptr);

template <typename T>
void backward(const StreamParams<T>& model, const ModelTrace<T>& trace,
              const Matrix<T>& d_logits, StreamParams<T>& grad);
template <typename T>
void backward(const MultiViewParams<T>& model, const ModelTrace<T>& trace,
              const Matrix<T>& d_logits, MultiViewParams<T>& grad);

/// Per-utterance class distributions, one row per valid frame.
template <typename T>
std::vector<Matrix<T>> forward(const StreamParams<T>& model, const ViewInputs<T>& inputs);
template <typename T>
std::vector<Matrix<T>> forward(const MultiViewParams<T>& model, const ViewInputs<T>& inputs);

std::size_t expected_parameter_count(const ModelConfig& cfg, ViewId view, bool with_head);
std::size_t expected_parameter_count(const ModelConfig& cfg);

// ---------------------------------------------------------------------------
// Tensor traversal. Visitors receive (name, info, tensor, tensor...) with one
// tensor per container passed, all of identical shape.

struct TensorInfo {
  bool lstm = false;  // belongs to a (B)LSTM layer
  int rank = 2;
};

template <typename>
struct is_stream_params : std::false_type {};
template <typename T>
struct is_stream_params<StreamParams<T>> : std::true_type {};
template <typename>
struct is_multiview_params : std::false_type {};
template <typename T>
struct is_multiview_params<MultiViewParams<T>> : std::true_type {};
template <typename>
struct is_encoder_params : std::false_type {};
template <typename T>
struct is_encoder_params<EncoderParams<T>> : std::true_type {};

namespace detail {

template <typename First, typename... Rest>
First& first_of(First& first, Rest&...) {
  return first;
}

template <typename F, typename... D>
void visit_dense(const std::string& prefix, F& f, D&... d) {
  f(prefix + "/weight", TensorInfo{false, 2}, d.weight...);
  f(prefix + "/bias", TensorInfo{false, 1}, d.bias...);
}

template <typename F, typename... L>
void visit_lstm(const std::string& prefix, F& f, L&... l) {
  f(prefix + "/w_input", TensorInfo{true, 2}, l.w_input...);
  f(prefix + "/w_hidden", TensorInfo{true, 2}, l.w_hidden...);
  f(prefix + "/bias", TensorInfo{true, 1}, l.bias...);
}

template <typename F, typename... B>
void visit_blstm(const std::string& prefix, F& f, B&... b) {
  visit_lstm(prefix + "/forward", f, b.forward...);
  visit_lstm(prefix + "/backward", f, b.backward...);
}

template <typename F, typename... E>
void visit_encoder(const std::string& prefix, F& f, E&... e) {
  const std::size_t n = first_of(e...).layers.size();
  for (std::size_t k = 0; k < n; ++k) {
    visit_dense(prefix + "/encoder/" + std::to_string(k), f, e.layers[k]...);
  }
}

template <typename F, typename... S>
void visit_stream(const std::string& prefix, F& f, S&... s) {
  visit_encoder(prefix, f, s.encoder...);
  visit_blstm(prefix + "/blstm", f, s.blstm...);
  if (first_of(s...).head) visit_dense(prefix + "/head", f, *s.head...);
}

inline std::string stream_prefix(ViewId view) { return "view/" + to_string(view); }

}  // namespace detail

template <typename F, typename First, typename... Rest>
  requires is_stream_params<std::remove_const_t<First>>::value
void for_each_tensor(F&& f, First& first, Rest&... rest) {
  detail::visit_stream(detail::stream_prefix(first.view), f, first, rest...);
}

template <typename F, typename First, typename... Rest>
  requires is_multiview_params<std::remove_const_t<First>>::value
void for_each_tensor(F&& f, First& first, Rest&... rest) {
  for (auto& [view, stream] : first.streams) {
    detail::visit_stream(detail::stream_prefix(view), f, stream, rest.streams.at(view)...);
  }
  detail::visit_blstm("fusion/blstm", f, first.fusion, rest.fusion...);
  detail::visit_dense("head", f, first.head, rest.head...);
}

template <typename Model>
std::size_t parameter_count(const Model& model) {
  std::size_t n = 0;
  for_each_tensor([&](const std::string&, TensorInfo, const auto& t) { n += t.size(); }, model);
  return n;
}

/// Same structure and shapes, all values zero.
template <typename Model>
Model zeros_like(const Model& model) {
  Model out = model;
  for_each_tensor([](const std::string&, TensorInfo, auto& t) { t.setZero(); }, out);
  return out;
}

}  // namespace mvlip
