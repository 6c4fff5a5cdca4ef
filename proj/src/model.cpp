// Copyright 2026 The mvlip Authors
// SPDX-License-Identifier: Apache-2.0

#include "mvlip/model.hpp"

#include <algorithm>
#include <numeric>

namespace mvlip {

FrameSize ModelConfig::frame_size(ViewId view) const {
  const auto it = frame_sizes.find(view);
  return it != frame_sizes.end() ? it->second : roi_size(view);
}

std::vector<std::size_t> ModelConfig::encoder_widths(ViewId view) const {
  return {input_dim(view), encoder_sizes[0], encoder_sizes[1], encoder_sizes[2], bottleneck_dim};
}

void ModelConfig::validate() const {
  if (views.empty()) throw InvalidArgument("model: at least one view is required");
  std::vector<ViewId> sorted = views;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw InvalidArgument("model: views must be distinct");
  }
  for (const ViewId v : views) {
    if (input_dim(v) == 0) throw InvalidArgument("model: empty frame size for view " + to_string(v));
  }
  for (const std::size_t s : encoder_sizes) {
    if (s == 0) throw InvalidArgument("model: encoder sizes must be >= 1");
  }
  if (bottleneck_dim == 0 || stream_hidden == 0 || fusion_hidden == 0 || num_classes == 0) {
    throw InvalidArgument("model: bottleneck, hidden sizes and class count must be >= 1");
  }
  delta.validate();
}

template <typename T>
std::vector<ViewId> MultiViewParams<T>::views() const {
  std::vector<ViewId> v;
  for (const auto& [view, stream] : streams) v.push_back(view);
  return v;
}

template <typename T>
std::vector<ViewId> PackedInputs<T>::views() const {
  std::vector<ViewId> v;
  for (const auto& [view, m] : frames) v.push_back(view);
  return v;
}

template <typename T>
EncoderParams<T> make_encoder(const std::vector<std::size_t>& widths, Rng& rng) {
  if (widths.size() < 2) throw InvalidArgument("make_encoder: need at least two widths");
  EncoderParams<T> enc;
  for (std::size_t k = 0; k + 1 < widths.size(); ++k) {
    const bool last = k + 2 == widths.size();
    enc.layers.push_back(make_dense<T>(widths[k], widths[k + 1],
                                       last ? Activation::linear : Activation::relu, rng));
  }
  return enc;
}

namespace {

template <typename T>
void check_encoder_shape(const EncoderParams<T>& enc, const std::vector<std::size_t>& widths,
                         ViewId view) {
  bool ok = enc.layers.size() + 1 == widths.size();
  for (std::size_t k = 0; ok && k < enc.layers.size(); ++k) {
    ok = enc.layers[k].input_size() == widths[k] && enc.layers[k].output_size() == widths[k + 1] &&
         static_cast<std::size_t>(enc.layers[k].bias.size()) == widths[k + 1];
  }
  if (!ok) {
    std::string expect;
    for (const std::size_t w : widths) expect += (expect.empty() ? "" : "/") + std::to_string(w);
    throw InvalidArgument("encoder for view " + to_string(view) +
                          " does not match configured widths " + expect);
  }
}

std::string angle_list(std::vector<ViewId> views) {
  std::sort(views.begin(), views.end());
  std::string s = "{";
  for (std::size_t i = 0; i < views.size(); ++i) {
    s += (i ? ", " : "") + to_string(views[i]);
  }
  return s + "}";
}

}  // namespace

template <typename T>
StreamParams<T> build_stream(const ModelConfig& cfg, ViewId view,
                             const std::optional<EncoderParams<T>>& pretrained, Rng& rng) {
  cfg.validate();
  const std::vector<std::size_t> widths = cfg.encoder_widths(view);
  StreamParams<T> s;
  s.view = view;
  s.delta = cfg.delta;
  if (pretrained) {
    check_encoder_shape(*pretrained, widths, view);
    s.encoder = *pretrained;
    for (std::size_t k = 0; k < s.encoder.layers.size(); ++k) {
      s.encoder.layers[k].activation =
          k + 1 == s.encoder.layers.size() ? Activation::linear : Activation::relu;
    }
  } else {
    s.encoder = make_encoder<T>(widths, rng);
  }
  s.blstm = make_blstm<T>(3 * cfg.bottleneck_dim, cfg.stream_hidden, rng, T(cfg.forget_bias));
  s.head = make_dense<T>(s.blstm.output_size(), cfg.num_classes, Activation::linear, rng);
  return s;
}

template <typename T>
MultiViewParams<T> build_multiview(const std::map<ViewId, StreamParams<T>>& single_streams,
                                   const ModelConfig& cfg, Rng& rng) {
  cfg.validate();
  MultiViewParams<T> m;
  std::size_t fused_width = 0;
  for (const ViewId view : cfg.views) {
    const auto it = single_streams.find(view);
    if (it == single_streams.end()) {
      throw ViewMismatch("build_multiview: no trained stream for view " + to_string(view));
    }
    StreamParams<T> stream = it->second;
    if (stream.view != view) {
      throw InvalidArgument("build_multiview: stream keyed " + to_string(view) +
                            " belongs to view " + to_string(stream.view));
    }
    check_encoder_shape(stream.encoder, cfg.encoder_widths(view), view);
    if (stream.blstm.input_size() != 3 * stream.encoder.output_size()) {
      throw InvalidArgument("build_multiview: stream BLSTM input does not match encoder");
    }
    stream.head.reset();
    fused_width += stream.blstm.output_size();
    m.streams.emplace(view, std::move(stream));
  }
  m.fusion = make_blstm<T>(fused_width, cfg.fusion_hidden, rng, T(cfg.forget_bias));
  m.head = make_dense<T>(m.fusion.output_size(), cfg.num_classes, Activation::linear, rng);
  return m;
}

void require_views(const std::vector<ViewId>& model_views, const std::vector<ViewId>& requested,
                   const std::string& context) {
  std::vector<ViewId> a = model_views;
  std::vector<ViewId> b = requested;
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  if (a != b) {
    throw ViewMismatch(context + ": model views " + angle_list(a) + " but requested views " +
                       angle_list(b));
  }
}

template <typename T>
PackedInputs<T> pack_inputs(const ViewInputs<T>& inputs) {
  if (inputs.empty()) throw InvalidArgument("pack_inputs: no views");
  PackedInputs<T> packed;
  const auto& [first_view, first_batch] = *inputs.begin();
  packed.layout = first_batch.layout();
  for (const auto& [view, batch] : inputs) {
    if (batch.size() != first_batch.size()) {
      throw InvalidArgument("pack_inputs: view " + to_string(view) + " has " +
                            std::to_string(batch.size()) + " utterances, view " +
                            to_string(first_view) + " has " + std::to_string(first_batch.size()));
    }
    for (std::size_t b = 0; b < batch.size(); ++b) {
      if (batch.lengths[b] != first_batch.lengths[b]) {
        throw InvalidArgument("pack_inputs: utterance " + std::to_string(b) + " has " +
                              std::to_string(batch.lengths[b]) + " frames in view " +
                              to_string(view) + " but " + std::to_string(first_batch.lengths[b]) +
                              " in view " + to_string(first_view));
      }
    }
    packed.frames.emplace(view, pack(batch));
  }
  return packed;
}

template <typename T>
StreamTrace<T> stream_forward(const StreamParams<T>& stream, const Matrix<T>& packed_frames,
                              const SequenceLayout& layout) {
  StreamTrace<T> tr;
  tr.activations.reserve(stream.encoder.layers.size() + 1);
  tr.activations.push_back(packed_frames);
  for (std::size_t k = 0; k < stream.encoder.layers.size(); ++k) {
    tr.activations.push_back(dense_forward(stream.encoder.layers[k], tr.activations.back()));
    require_finite(tr.activations.back(),
                   "view " + to_string(stream.view) + " encoder layer " + std::to_string(k));
  }
  const Matrix<T>& bottleneck = tr.activations.back();
  tr.features.resize(bottleneck.rows(), 3 * bottleneck.cols());
  for (std::size_t u = 0; u < layout.size(); ++u) {
    tr.features.middleRows(layout.offsets[u], layout.lengths[u]) =
        delta_features<T>(rows_of(bottleneck, layout, u), stream.delta);
  }
  tr.output = blstm_forward(stream.blstm, tr.features, layout, &tr.blstm);
  return tr;
}

template <typename T>
void stream_backward(const StreamParams<T>& stream, const StreamTrace<T>& trace,
                     const SequenceLayout& layout, const Matrix<T>& d_output,
                     StreamParams<T>& grad) {
  const Matrix<T> d_features = blstm_backward(stream.blstm, trace.blstm, d_output, grad.blstm);
  const Eigen::Index b = d_features.cols() / 3;
  Matrix<T> d = Matrix<T>(d_features.rows(), b);
  for (std::size_t u = 0; u < layout.size(); ++u) {
    d.middleRows(layout.offsets[u], layout.lengths[u]) =
        delta_backward<T>(rows_of(d_features, layout, u), stream.delta);
  }
  for (std::size_t k = stream.encoder.layers.size(); k-- > 0;) {
    d = dense_backward(stream.encoder.layers[k], trace.activations[k], trace.activations[k + 1], d,
                       grad.encoder.layers[k], k > 0);
  }
}

template <typename T>
Matrix<T> forward_logits(const StreamParams<T>& model, const PackedInputs<T>& inputs,
                         ModelTrace<T>* trace) {
  if (!model.head) throw InvalidArgument("stream model has no softmax head");
  require_views({model.view}, inputs.views(), "forward");
  ModelTrace<T> local;
  ModelTrace<T>& tr = trace ? *trace : local;
  tr.layout = inputs.layout;
  tr.streams.clear();
  StreamTrace<T>& st =
      tr.streams.emplace(model.view,
                         stream_forward(model, inputs.frames.at(model.view), inputs.layout))
          .first->second;
  tr.logits = dense_forward(*model.head, st.output);
  return tr.logits;
}

template <typename T>
Matrix<T> forward_logits(const MultiViewParams<T>& model, const PackedInputs<T>& inputs,
                         ModelTrace<T>* trace) {
  require_views(model.views(), inputs.views(), "forward");
  ModelTrace<T> local;
  ModelTrace<T>& tr = trace ? *trace : local;
  tr.layout = inputs.layout;
  tr.streams.clear();
  Eigen::Index width = 0;
  for (const auto& [view, stream] : model.streams) {
    auto& st = tr.streams.emplace(view, stream_forward(stream, inputs.frames.at(view), inputs.layout))
                   .first->second;
    width += st.output.cols();
  }
  Matrix<T> fused(inputs.layout.total_frames, width);
  Eigen::Index col = 0;
  for (const auto& [view, st] : tr.streams) {
    fused.middleCols(col, st.output.cols()) = st.output;
    col += st.output.cols();
  }
  tr.head_input = blstm_forward(model.fusion, fused, inputs.layout, &tr.fusion);
  tr.logits = dense_forward(model.head, tr.head_input);
  return tr.logits;
}

template <typename T>
void backward(const StreamParams<T>& model, const ModelTrace<T>& trace, const Matrix<T>& d_logits,
              StreamParams<T>& grad) {
  const StreamTrace<T>& st = trace.streams.at(model.view);
  const Matrix<T> d_out = dense_backward(*model.head, st.output, trace.logits, d_logits, *grad.head);
  stream_backward(model, st, trace.layout, d_out, grad);
}

template <typename T>
void backward(const MultiViewParams<T>& model, const ModelTrace<T>& trace,
              const Matrix<T>& d_logits, MultiViewParams<T>& grad) {
  const Matrix<T> d_head_in =
      dense_backward(model.head, trace.head_input, trace.logits, d_logits, grad.head);
  const Matrix<T> d_fused = blstm_backward(model.fusion, trace.fusion, d_head_in, grad.fusion);
  Eigen::Index col = 0;
  for (const auto& [view, stream] : model.streams) {
    const StreamTrace<T>& st = trace.streams.at(view);
    const Eigen::Index w = st.output.cols();
    stream_backward(stream, st, trace.layout, Matrix<T>(d_fused.middleCols(col, w)),
                    grad.streams.at(view));
    col += w;
  }
}

template <typename T>
std::vector<Matrix<T>> forward(const StreamParams<T>& model, const ViewInputs<T>& inputs) {
  const PackedInputs<T> packed = pack_inputs(inputs);
  return unpack<T>(softmax<T>(forward_logits(model, packed)), packed.layout);
}

template <typename T>
std::vector<Matrix<T>> forward(const MultiViewParams<T>& model, const ViewInputs<T>& inputs) {
  const PackedInputs<T> packed = pack_inputs(inputs);
  return unpack<T>(softmax<T>(forward_logits(model, packed)), packed.layout);
}

std::size_t expected_parameter_count(const ModelConfig& cfg, ViewId view, bool with_head) {
  const std::vector<std::size_t> w = cfg.encoder_widths(view);
  std::size_t n = 0;
  for (std::size_t k = 0; k + 1 < w.size(); ++k) n += w[k] * w[k + 1] + w[k + 1];
  const std::size_t h = cfg.stream_hidden;
  n += 2 * (4 * h * 3 * cfg.bottleneck_dim + 4 * h * h + 4 * h);
  if (with_head) n += 2 * h * cfg.num_classes + cfg.num_classes;
  return n;
}

std::size_t expected_parameter_count(const ModelConfig& cfg) {
  std::size_t n = 0;
  for (const ViewId v : cfg.views) n += expected_parameter_count(cfg, v, false);
  const std::size_t fused = cfg.views.size() * 2 * cfg.stream_hidden;
  const std::size_t f = cfg.fusion_hidden;
  n += 2 * (4 * f * fused + 4 * f * f + 4 * f);
  n += 2 * f * cfg.num_classes + cfg.num_classes;
  return n;
}

#define MVLIP_INSTANTIATE(T)                                                                      \
  template struct MultiViewParams<T>;                                                             \
  template struct PackedInputs<T>;                                                                \
  template EncoderParams<T> make_encoder<T>(const std::vector<std::size_t>&, Rng&);               \
  template StreamParams<T> build_stream<T>(const ModelConfig&, ViewId,                            \
                                           const std::optional<EncoderParams<T>>&, Rng&);         \
  template MultiViewParams<T> build_multiview<T>(const std::map<ViewId, StreamParams<T>>&,        \
                                                 const ModelConfig&, Rng&);                       \
  template PackedInputs<T> pack_inputs<T>(const ViewInputs<T>&);                                  \
  template StreamTrace<T> stream_forward<T>(const StreamParams<T>&, const Matrix<T>&,             \
                                            const SequenceLayout&);                               \
  template void stream_backward<T>(const StreamParams<T>&, const StreamTrace<T>&,                 \
                                   const SequenceLayout&, const Matrix<T>&, StreamParams<T>&);    \
  template Matrix<T> forward_logits<T>(const StreamParams<T>&, const PackedInputs<T>&,            \
                                       ModelTrace<T>*);                                           \
  template Matrix<T> forward_logits<T>(const MultiViewParams<T>&, const PackedInputs<T>&,         \
                                       ModelTrace<T>*);                                           \
  template void backward<T>(const StreamParams<T>&, const ModelTrace<T>&, const Matrix<T>&,       \
                            StreamParams<T>&);                                                    \
  template void backward<T>(const MultiViewParams<T>&, const ModelTrace<T>&, const Matrix<T>&,    \
                            MultiViewParams<T>&);                                                 \
  template std::vector<Matrix<T>> forward<T>(const StreamParams<T>&, const ViewInputs<T>&);       \
  template std::vector<Matrix<T>> forward<T>(const MultiViewParams<T>&, const ViewInputs<T>&);

MVLIP_INSTANTIATE(float)
MVLIP_INSTANTIATE(double)

}  // namespace mvlip
