// Copyright 2026 The mvlip Authors
// SPDX-License-Identifier: Apache-2.0

#include "mvlip/net.hpp"

#include <algorithm>
#include <string>

namespace mvlip {

namespace {

template <typename T>
void require_cols(const Matrix<T>& x, std::size_t expected, const char* what) {
  if (static_cast<std::size_t>(x.cols()) != expected) {
    throw InvalidArgument(std::string(what) + ": expected " + std::to_string(expected) +
                          " columns, got " + std::to_string(x.cols()));
  }
}

template <typename T, typename Derived>
auto sigmoid(const Eigen::ArrayBase<Derived>& a) {
  return (T(1) / (T(1) + (-a).exp()));
}

}  // namespace

template <typename T>
DenseLayer<T> make_dense(std::size_t inputs, std::size_t outputs, Activation act, Rng& rng) {
  DenseLayer<T> layer;
  layer.weight = glorot_init<T>(inputs, outputs, rng);
  layer.bias = RowVector<T>::Zero(outputs);
  layer.activation = act;
  return layer;
}

template <typename T>
Matrix<T> dense_forward(const DenseLayer<T>& layer, const Matrix<T>& x) {
  require_cols(x, layer.input_size(), "dense_forward");
  Matrix<T> y = x * layer.weight;
  y.rowwise() += layer.bias;
  if (layer.activation == Activation::relu) y = y.cwiseMax(T(0));
  return y;
}

template <typename T>
Matrix<T> dense_backward(const DenseLayer<T>& layer, const Matrix<T>& x, const Matrix<T>& y,
                         const Matrix<T>& dy, DenseLayer<T>& grad, bool input_grad) {
  require_cols(x, layer.input_size(), "dense_backward");
  require_cols(dy, layer.output_size(), "dense_backward");
  if (x.rows() != dy.rows() || y.rows() != dy.rows()) {
    throw InvalidArgument("dense_backward: row count mismatch");
  }
  Matrix<T> dz = dy;
  if (layer.activation == Activation::relu) {
    dz = dz.cwiseProduct(relu_grad<T>(y));
  }
  grad.weight.noalias() += x.transpose() * dz;
  grad.bias += dz.colwise().sum();
  if (!input_grad) return Matrix<T>();
  return dz * layer.weight.transpose();
}

template <typename T>
Matrix<T> softmax_head(const DenseLayer<T>& head, const Matrix<T>& x) {
  return softmax<T>(dense_forward(head, x));
}

void DeltaConfig::validate() const {
  if (window < 1) throw InvalidArgument("delta window must be >= 1");
}

template <typename T>
Matrix<T> delta_regression(const Matrix<T>& seq, std::size_t window) {
  const Eigen::Index n = seq.rows();
  Matrix<T> out = Matrix<T>::Zero(n, seq.cols());
  if (n == 0) return out;
  double denom = 0.0;
  for (std::size_t k = 1; k <= window; ++k) denom += static_cast<double>(k * k);
  denom *= 2.0;
  for (Eigen::Index t = 0; t < n; ++t) {
    for (std::size_t k = 1; k <= window; ++k) {
      const auto step = static_cast<Eigen::Index>(k);
      const Eigen::Index ahead = std::min(t + step, n - 1);
      const Eigen::Index behind = std::max(t - step, Eigen::Index{0});
      out.row(t) += T(k) * (seq.row(ahead) - seq.row(behind));
    }
  }
  out /= T(denom);
  return out;
}

template <typename T>
Matrix<T> delta_regression_transpose(const Matrix<T>& grad, std::size_t window) {
  const Eigen::Index n = grad.rows();
  Matrix<T> out = Matrix<T>::Zero(n, grad.cols());
  if (n == 0) return out;
  double denom = 0.0;
  for (std::size_t k = 1; k <= window; ++k) denom += static_cast<double>(k * k);
  denom *= 2.0;
  const Matrix<T> scaled = grad / T(denom);
  for (Eigen::Index t = 0; t < n; ++t) {
    for (std::size_t k = 1; k <= window; ++k) {
      const auto step = static_cast<Eigen::Index>(k);
      const Eigen::Index ahead = std::min(t + step, n - 1);
      const Eigen::Index behind = std::max(t - step, Eigen::Index{0});
      out.row(ahead) += T(k) * scaled.row(t);
      out.row(behind) -= T(k) * scaled.row(t);
    }
  }
  return out;
}

template <typename T>
Matrix<T> delta_features(const Matrix<T>& seq, const DeltaConfig& cfg) {
  cfg.validate();
  const Eigen::Index d = seq.cols();
  Matrix<T> out(seq.rows(), 3 * d);
  const Matrix<T> delta = delta_regression(seq, cfg.window);
  out.leftCols(d) = seq;
  out.middleCols(d, d) = delta;
  out.rightCols(d) = delta_regression(delta, cfg.window);
  return out;
}

template <typename T>
Matrix<T> delta_backward(const Matrix<T>& d_out, const DeltaConfig& cfg) {
  cfg.validate();
  if (d_out.cols() % 3 != 0) {
    throw InvalidArgument("delta_backward: column count must be a multiple of 3");
  }
  const Eigen::Index d = d_out.cols() / 3;
  const Matrix<T> d_delta =
      Matrix<T>(d_out.middleCols(d, d)) +
      delta_regression_transpose<T>(Matrix<T>(d_out.rightCols(d)), cfg.window);
  return Matrix<T>(d_out.leftCols(d)) + delta_regression_transpose(d_delta, cfg.window);
}

SequenceLayout SequenceLayout::from_lengths(std::vector<std::size_t> lengths) {
  SequenceLayout layout;
  layout.offsets.reserve(lengths.size());
  for (const std::size_t len : lengths) {
    layout.offsets.push_back(layout.total_frames);
    layout.total_frames += len;
  }
  layout.lengths = std::move(lengths);
  return layout;
}

template <typename T>
SequenceBatch<T> SequenceBatch<T>::from_sequences(const std::vector<Matrix<T>>& sequences) {
  SequenceBatch<T> batch;
  Eigen::Index max_len = 0;
  Eigen::Index dim = sequences.empty() ? 0 : sequences.front().cols();
  for (const auto& s : sequences) {
    if (s.cols() != dim) throw InvalidArgument("SequenceBatch: inconsistent frame dimension");
    max_len = std::max(max_len, s.rows());
  }
  for (const auto& s : sequences) {
    Matrix<T> padded = Matrix<T>::Zero(max_len, dim);
    padded.topRows(s.rows()) = s;
    batch.frames.push_back(std::move(padded));
    batch.lengths.push_back(static_cast<std::size_t>(s.rows()));
  }
  return batch;
}

template <typename T>
std::size_t SequenceBatch<T>::max_length() const {
  std::size_t m = 0;
  for (const auto& f : frames) m = std::max(m, static_cast<std::size_t>(f.rows()));
  return m;
}

template <typename T>
std::size_t SequenceBatch<T>::dim() const {
  return frames.empty() ? 0 : static_cast<std::size_t>(frames.front().cols());
}

template <typename T>
std::vector<std::vector<bool>> SequenceBatch<T>::mask() const {
  std::vector<std::vector<bool>> m;
  for (std::size_t b = 0; b < size(); ++b) {
    std::vector<bool> row(frames[b].rows(), false);
    std::fill_n(row.begin(), lengths[b], true);
    m.push_back(std::move(row));
  }
  return m;
}

template <typename T>
Matrix<T> pack(const SequenceBatch<T>& batch) {
  if (batch.frames.size() != batch.lengths.size()) {
    throw InvalidArgument("pack: frames/lengths size mismatch");
  }
  const SequenceLayout layout = batch.layout();
  Matrix<T> packed(layout.total_frames, batch.dim());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    if (batch.lengths[b] > static_cast<std::size_t>(batch.frames[b].rows())) {
      throw InvalidArgument("pack: length exceeds padded frame count");
    }
    packed.middleRows(layout.offsets[b], batch.lengths[b]) =
        batch.frames[b].topRows(batch.lengths[b]);
  }
  return packed;
}

template <typename T>
std::vector<Matrix<T>> unpack(const Matrix<T>& packed, const SequenceLayout& layout) {
  if (static_cast<std::size_t>(packed.rows()) != layout.total_frames) {
    throw InvalidArgument("unpack: row count does not match layout");
  }
  std::vector<Matrix<T>> out;
  out.reserve(layout.size());
  for (std::size_t b = 0; b < layout.size(); ++b) out.push_back(rows_of(packed, layout, b));
  return out;
}

template <typename T>
LstmParams<T> make_lstm(std::size_t inputs, std::size_t hidden, Rng& rng, T forget_bias) {
  if (inputs == 0 || hidden == 0) throw InvalidArgument("make_lstm: sizes must be >= 1");
  const auto h = static_cast<Eigen::Index>(hidden);
  LstmParams<T> p;
  p.w_input.resize(inputs, 4 * h);
  p.w_hidden.resize(hidden, 4 * h);
  for (Eigen::Index g = 0; g < 4; ++g) {
    p.w_input.middleCols(g * h, h) = glorot_init<T>(inputs, hidden, rng);
    p.w_hidden.middleCols(g * h, h) = glorot_init<T>(hidden, hidden, rng);
  }
  p.bias = RowVector<T>::Zero(4 * h);
  p.bias.segment(static_cast<Eigen::Index>(Gate::forget) * h, h).setConstant(forget_bias);
  return p;
}

template <typename T>
BlstmParams<T> make_blstm(std::size_t inputs, std::size_t hidden, Rng& rng, T forget_bias) {
  BlstmParams<T> p;
  p.forward = make_lstm<T>(inputs, hidden, rng, forget_bias);
  p.backward = make_lstm<T>(inputs, hidden, rng, forget_bias);
  return p;
}

namespace {

template <typename T>
void lstm_forward_direction(const LstmParams<T>& p, const Matrix<T>& x,
                            const SequenceLayout& layout, bool reverse, LstmTrace<T>& tr) {
  const Eigen::Index h = static_cast<Eigen::Index>(p.hidden_size());
  const Eigen::Index n = x.rows();
  tr.gates = x * p.w_input;
  tr.gates.rowwise() += p.bias;
  tr.cell.resize(n, h);
  tr.cell_tanh.resize(n, h);
  tr.hidden.resize(n, h);

  RowVector<T> h_prev(h);
  RowVector<T> c_prev(h);
  for (std::size_t u = 0; u < layout.size(); ++u) {
    const auto len = static_cast<Eigen::Index>(layout.lengths[u]);
    const auto off = static_cast<Eigen::Index>(layout.offsets[u]);
    h_prev.setZero();
    c_prev.setZero();
    for (Eigen::Index s = 0; s < len; ++s) {
      const Eigen::Index row = off + (reverse ? len - 1 - s : s);
      auto a = tr.gates.row(row);
      a.noalias() += h_prev * p.w_hidden;
      a.head(3 * h) = sigmoid<T>(a.head(3 * h).array()).matrix();
      a.tail(h) = a.tail(h).array().tanh().matrix();
      const auto i = a.segment(0, h).array();
      const auto f = a.segment(h, h).array();
      const auto o = a.segment(2 * h, h).array();
      const auto g = a.segment(3 * h, h).array();
      tr.cell.row(row) = (f * c_prev.array() + i * g).matrix();
      tr.cell_tanh.row(row) = tr.cell.row(row).array().tanh().matrix();
      tr.hidden.row(row) = (o * tr.cell_tanh.row(row).array()).matrix();
      if (!tr.hidden.row(row).allFinite() || !tr.cell.row(row).allFinite()) {
        throw NumericFailure("lstm: non-finite state in utterance " + std::to_string(u) +
                             " at timestep " + std::to_string(row - off));
      }
      h_prev = tr.hidden.row(row);
      c_prev = tr.cell.row(row);
    }
  }
}

template <typename T>
Matrix<T> lstm_backward_direction(const LstmParams<T>& p, const Matrix<T>& x,
                                  const SequenceLayout& layout, bool reverse,
                                  const LstmTrace<T>& tr, const Matrix<T>& d_hidden,
                                  LstmParams<T>& grad) {
  const Eigen::Index h = static_cast<Eigen::Index>(p.hidden_size());
  const Eigen::Index n = x.rows();
  Matrix<T> d_pre = Matrix<T>::Zero(n, 4 * h);
  Matrix<T> h_prev_all = Matrix<T>::Zero(n, h);

  RowVector<T> dh_next(h);
  RowVector<T> dc_next(h);
  RowVector<T> c_prev(h);
  for (std::size_t u = 0; u < layout.size(); ++u) {
    const auto len = static_cast<Eigen::Index>(layout.lengths[u]);
    const auto off = static_cast<Eigen::Index>(layout.offsets[u]);
    dh_next.setZero();
    dc_next.setZero();
    for (Eigen::Index s = len - 1; s >= 0; --s) {
      const Eigen::Index row = off + (reverse ? len - 1 - s : s);
      const Eigen::Index prev_row = off + (reverse ? len - s : s - 1);
      const bool has_prev = s > 0;
      if (has_prev) {
        c_prev = tr.cell.row(prev_row);
        h_prev_all.row(row) = tr.hidden.row(prev_row);
      } else {
        c_prev.setZero();
      }
      const auto gates = tr.gates.row(row).array();
      const auto i = gates.segment(0, h);
      const auto f = gates.segment(h, h);
      const auto o = gates.segment(2 * h, h);
      const auto g = gates.segment(3 * h, h);
      const auto tc = tr.cell_tanh.row(row).array();

      const auto dh = (d_hidden.row(row) + dh_next).array().eval();
      const auto dc = (dh * o * (T(1) - tc.square()) + dc_next.array()).eval();
      auto dp = d_pre.row(row);
      dp.segment(0, h) = (dc * g * i * (T(1) - i)).matrix();
      dp.segment(h, h) = (dc * c_prev.array() * f * (T(1) - f)).matrix();
      dp.segment(2 * h, h) = (dh * tc * o * (T(1) - o)).matrix();
      dp.segment(3 * h, h) = (dc * i * (T(1) - g.square())).matrix();
      dc_next = (dc * f).matrix();
      dh_next.noalias() = dp * p.w_hidden.transpose();
    }
  }
  grad.w_input.noalias() += x.transpose() * d_pre;
  grad.w_hidden.noalias() += h_prev_all.transpose() * d_pre;
  grad.bias += d_pre.colwise().sum();
  return d_pre * p.w_input.transpose();
}

template <typename T>
void check_blstm_input(const BlstmParams<T>& params, const Matrix<T>& x,
                       const SequenceLayout& layout) {
  require_cols(x, params.input_size(), "blstm");
  if (params.backward.input_size() != params.input_size() ||
      params.backward.hidden_size() != params.hidden_size()) {
    throw InvalidArgument("blstm: forward/backward parameter shapes differ");
  }
  if (static_cast<std::size_t>(x.rows()) != layout.total_frames) {
    throw InvalidArgument("blstm: input rows do not match sequence layout");
  }
}

}  // namespace

template <typename T>
Matrix<T> blstm_forward(const BlstmParams<T>& params, const Matrix<T>& x,
                        const SequenceLayout& layout, BlstmCache<T>* cache) {
  check_blstm_input(params, x, layout);
  BlstmCache<T> local;
  BlstmCache<T>& c = cache ? *cache : local;
  lstm_forward_direction(params.forward, x, layout, false, c.forward);
  lstm_forward_direction(params.backward, x, layout, true, c.backward);
  const Eigen::Index h = static_cast<Eigen::Index>(params.hidden_size());
  Matrix<T> out(x.rows(), 2 * h);
  out.leftCols(h) = c.forward.hidden;
  out.rightCols(h) = c.backward.hidden;
  if (cache) {
    c.input = x;
    c.layout = layout;
  }
  return out;
}

template <typename T>
Matrix<T> blstm_backward(const BlstmParams<T>& params, const BlstmCache<T>& cache,
                         const Matrix<T>& d_out, BlstmParams<T>& grad) {
  check_blstm_input(params, cache.input, cache.layout);
  const Eigen::Index h = static_cast<Eigen::Index>(params.hidden_size());
  if (d_out.rows() != cache.input.rows() || d_out.cols() != 2 * h) {
    throw InvalidArgument("blstm_backward: gradient shape does not match cache");
  }
  if (cache.forward.hidden.rows() != d_out.rows()) {
    throw InvalidArgument("blstm_backward: cache is incomplete");
  }
  Matrix<T> dx = lstm_backward_direction(params.forward, cache.input, cache.layout, false,
                                         cache.forward, Matrix<T>(d_out.leftCols(h)),
                                         grad.forward);
  dx += lstm_backward_direction(params.backward, cache.input, cache.layout, true,
                                cache.backward, Matrix<T>(d_out.rightCols(h)), grad.backward);
  return dx;
}

template <typename T>
SequenceBatch<T> blstm_forward(const BlstmParams<T>& params, const SequenceBatch<T>& batch) {
  const SequenceLayout layout = batch.layout();
  const Matrix<T> out = blstm_forward(params, pack(batch), layout);
  SequenceBatch<T> result;
  result.lengths = batch.lengths;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    Matrix<T> padded = Matrix<T>::Zero(batch.frames[b].rows(), out.cols());
    padded.topRows(layout.lengths[b]) = rows_of(out, layout, b);
    result.frames.push_back(std::move(padded));
  }
  return result;
}

#define MVLIP_INSTANTIATE(T)                                                                 \
  template DenseLayer<T> make_dense<T>(std::size_t, std::size_t, Activation, Rng&);          \
  template Matrix<T> dense_forward<T>(const DenseLayer<T>&, const Matrix<T>&);               \
  template Matrix<T> dense_backward<T>(const DenseLayer<T>&, const Matrix<T>&,               \
                                       const Matrix<T>&, const Matrix<T>&, DenseLayer<T>&,   \
                                       bool);                                                \
  template Matrix<T> softmax_head<T>(const DenseLayer<T>&, const Matrix<T>&);                \
  template Matrix<T> delta_regression<T>(const Matrix<T>&, std::size_t);                     \
  template Matrix<T> delta_regression_transpose<T>(const Matrix<T>&, std::size_t);           \
  template Matrix<T> delta_features<T>(const Matrix<T>&, const DeltaConfig&);                \
  template Matrix<T> delta_backward<T>(const Matrix<T>&, const DeltaConfig&);                \
  template struct SequenceBatch<T>;                                                          \
  template Matrix<T> pack<T>(const SequenceBatch<T>&);                                       \
  template std::vector<Matrix<T>> unpack<T>(const Matrix<T>&, const SequenceLayout&);        \
  template LstmParams<T> make_lstm<T>(std::size_t, std::size_t, Rng&, T);                    \
  template BlstmParams<T> make_blstm<T>(std::size_t, std::size_t, Rng&, T);                  \
  template Matrix<T> blstm_forward<T>(const BlstmParams<T>&, const Matrix<T>&,               \
                                      const SequenceLayout&, BlstmCache<T>*);                \
  template Matrix<T> blstm_backward<T>(const BlstmParams<T>&, const BlstmCache<T>&,          \
                                       const Matrix<T>&, BlstmParams<T>&);                   \
  template SequenceBatch<T> blstm_forward<T>(const BlstmParams<T>&, const SequenceBatch<T>&);

MVLIP_INSTANTIATE(float)
MVLIP_INSTANTIATE(double)

}  // namespace mvlip
