// Copyright 2026 The mvlip Authors
// SPDX-License-Identifier: Apache-2.0

#include "mvlip/rbm.hpp"

#include <cmath>
#include <numeric>

namespace mvlip {

template <typename T>
RbmVelocity<T> RbmVelocity<T>::zeros_for(const GaussianRbm<T>& rbm) {
  RbmVelocity<T> v;
  v.weight = Matrix<T>::Zero(rbm.weight.rows(), rbm.weight.cols());
  v.visible_bias = RowVector<T>::Zero(rbm.visible_bias.size());
  v.hidden_bias = RowVector<T>::Zero(rbm.hidden_bias.size());
  return v;
}

void CdConfig::validate() const {
  if (epochs < 1) throw InvalidArgument("rbm: epochs must be >= 1");
  if (batch_size < 1) throw InvalidArgument("rbm: batch size must be >= 1");
  if (!(lr >= 0.0)) throw InvalidArgument("rbm: learning rate must be >= 0");
  if (!(l2 >= 0.0)) throw InvalidArgument("rbm: l2 must be >= 0");
  if (cd_steps < 1) throw InvalidArgument("rbm: cd_steps must be >= 1");
}

template <typename T>
GaussianRbm<T> make_rbm(std::size_t visible, std::size_t hidden, HiddenKind kind,
                        double init_stddev, Rng& rng) {
  if (visible == 0 || hidden == 0) throw InvalidArgument("make_rbm: sizes must be >= 1");
  GaussianRbm<T> rbm;
  rbm.weight = normal_init<T>(visible, hidden, init_stddev, rng);
  rbm.visible_bias = RowVector<T>::Zero(visible);
  rbm.hidden_bias = RowVector<T>::Zero(hidden);
  rbm.hidden_kind = kind;
  return rbm;
}

namespace {

template <typename T>
Matrix<T> hidden_input(const GaussianRbm<T>& rbm, const Matrix<T>& visible) {
  Matrix<T> x = visible * rbm.weight;
  x.rowwise() += rbm.hidden_bias;
  return x;
}

template <typename T>
Matrix<T> sample_hidden(const GaussianRbm<T>& rbm, const Matrix<T>& x, Rng& rng) {
  Matrix<T> h(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double xi = static_cast<double>(x.data()[i]);
    const double noise = rng.normal();
    if (rbm.hidden_kind == HiddenKind::linear) {
      h.data()[i] = static_cast<T>(xi + noise);
    } else {
      const double sd = std::sqrt(1.0 / (1.0 + std::exp(-xi)));
      h.data()[i] = static_cast<T>(std::max(0.0, xi + sd * noise));
    }
  }
  return h;
}

// x -> (x - mean) * scale per column. Near-constant columns get scale 0.
template <typename T>
struct Standardiser {
  RowVector<T> mean;
  RowVector<T> scale;

  static Standardiser identity(Eigen::Index cols) {
    return {RowVector<T>::Zero(cols), RowVector<T>::Ones(cols)};
  }

  static Standardiser fit(const Matrix<T>& x) {
    const Eigen::Index n = x.rows();
    Standardiser s{RowVector<T>(x.cols()), RowVector<T>(x.cols())};
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      double sum = 0.0, sq = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) sum += static_cast<double>(x(i, j));
      const double mu = sum / static_cast<double>(n);
      for (Eigen::Index i = 0; i < n; ++i) {
        const double d = static_cast<double>(x(i, j)) - mu;
        sq += d * d;
      }
      const double sd = std::sqrt(sq / static_cast<double>(n));
      s.mean[j] = static_cast<T>(mu);
      s.scale[j] = sd > 1e-6 ? static_cast<T>(1.0 / sd) : T(0);
    }
    return s;
  }

  Matrix<T> apply(const Matrix<T>& x) const {
    return ((x.rowwise() - mean).array().rowwise() * scale.array()).matrix();
  }
};

template <typename T>
Matrix<T> activate_mean(const GaussianRbm<T>& rbm, Matrix<T> x) {
  if (rbm.hidden_kind == HiddenKind::noisy_relu) x = x.cwiseMax(T(0));
  return x;
}

}  // namespace

template <typename T>
Matrix<T> hidden_mean(const GaussianRbm<T>& rbm, const Matrix<T>& visible) {
  if (static_cast<std::size_t>(visible.cols()) != rbm.visible_size()) {
    throw InvalidArgument("rbm: input has " + std::to_string(visible.cols()) +
                          " columns, expected " + std::to_string(rbm.visible_size()));
  }
  return activate_mean(rbm, hidden_input(rbm, visible));
}

template <typename T>
double cd_update(GaussianRbm<T>& rbm, RbmVelocity<T>& velocity, const Matrix<T>& batch,
                 const CdConfig& cfg, std::size_t epoch, Rng& rng) {
  cfg.validate();
  if (batch.rows() == 0) throw InvalidArgument("cd_update: empty batch");
  if (static_cast<std::size_t>(batch.rows()) > cfg.batch_size) {
    throw InvalidArgument("cd_update: batch larger than configured batch size");
  }
  const Matrix<T> h_pos = hidden_mean(rbm, batch);
  Matrix<T> v_neg;
  Matrix<T> h_neg = h_pos;
  Matrix<T> h_input = hidden_input(rbm, batch);
  for (std::size_t step = 0; step < cfg.cd_steps; ++step) {
    const Matrix<T> h_sample = sample_hidden(rbm, h_input, rng);
    v_neg = h_sample * rbm.weight.transpose();
    v_neg.rowwise() += rbm.visible_bias;
    h_input = hidden_input(rbm, v_neg);
    h_neg = activate_mean(rbm, h_input);
  }
  if (!h_pos.allFinite() || !v_neg.allFinite() || !h_neg.allFinite()) {
    throw NumericFailure("rbm (" + std::to_string(rbm.visible_size()) + "x" +
                         std::to_string(rbm.hidden_size()) + "): non-finite activations");
  }

  const T inv_n = T(1) / static_cast<T>(batch.rows());
  const T momentum = static_cast<T>(cfg.momentum.at(epoch));
  const T lr = static_cast<T>(cfg.lr);
  const Matrix<T> grad_w =
      (batch.transpose() * h_pos - v_neg.transpose() * h_neg) * inv_n - T(cfg.l2) * rbm.weight;
  const RowVector<T> grad_vb = (batch - v_neg).colwise().sum() * inv_n;
  const RowVector<T> grad_hb = (h_pos - h_neg).colwise().sum() * inv_n;

  velocity.weight = momentum * velocity.weight + grad_w;
  velocity.visible_bias = momentum * velocity.visible_bias + grad_vb;
  velocity.hidden_bias = momentum * velocity.hidden_bias + grad_hb;
  rbm.weight += lr * velocity.weight;
  rbm.visible_bias += lr * velocity.visible_bias;
  rbm.hidden_bias += lr * velocity.hidden_bias;

  return static_cast<double>((batch - v_neg).squaredNorm()) / static_cast<double>(batch.size());
}

template <typename T>
std::vector<double> train_rbm(GaussianRbm<T>& rbm, const Matrix<T>& data, const CdConfig& cfg,
                              Rng& rng) {
  cfg.validate();
  if (data.rows() == 0) throw InvalidArgument("train_rbm: no data");
  RbmVelocity<T> velocity = RbmVelocity<T>::zeros_for(rbm);
  std::vector<std::size_t> order(data.rows());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> errors;
  Matrix<T> batch;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t n = std::min(cfg.batch_size, order.size() - start);
      batch.resize(n, data.cols());
      for (std::size_t i = 0; i < n; ++i) batch.row(i) = data.row(order[start + i]);
      sum += cd_update(rbm, velocity, batch, cfg, epoch, rng) * static_cast<double>(n);
    }
    errors.push_back(sum / static_cast<double>(order.size()));
  }
  return errors;
}

template <typename T>
PretrainResult<T> pretrain_stack(const Matrix<T>& data, const std::vector<std::size_t>& layer_sizes,
                                 const CdConfig& cfg, Rng& rng) {
  if (data.rows() == 0 || data.cols() == 0) throw InvalidArgument("pretrain_stack: no data");
  if (layer_sizes.size() != 4) {
    throw InvalidArgument("pretrain_stack: expected 4 layer sizes, got " +
                          std::to_string(layer_sizes.size()));
  }
  PretrainResult<T> result;
  Matrix<T> input = data;
  for (std::size_t k = 0; k < layer_sizes.size(); ++k) {
    const bool bottleneck = k + 1 == layer_sizes.size();
    // Frames arrive z-normalised; deeper inputs are standardised per unit so
    // the unit-variance visible model holds, and the affine map is folded
    // back into the layer afterwards.
    const Standardiser<T> norm = k == 0 ? Standardiser<T>::identity(input.cols())
                                        : Standardiser<T>::fit(input);
    const Matrix<T> visible = norm.apply(input);
    GaussianRbm<T> rbm =
        make_rbm<T>(static_cast<std::size_t>(visible.cols()), layer_sizes[k],
                    bottleneck ? HiddenKind::linear : HiddenKind::noisy_relu, cfg.init_stddev, rng);
    try {
      result.reconstruction_errors.push_back(train_rbm(rbm, visible, cfg, rng));
    } catch (const NumericFailure& e) {
      throw NumericFailure("pretraining layer " + std::to_string(k) + ": " + e.what());
    }
    DenseLayer<T> layer;
    layer.weight = norm.scale.asDiagonal() * rbm.weight;
    layer.bias = rbm.hidden_bias - (norm.mean.cwiseProduct(norm.scale)) * rbm.weight;
    layer.activation = bottleneck ? Activation::linear : Activation::relu;
    if (!bottleneck) input = hidden_mean(rbm, visible);
    result.encoder.layers.push_back(std::move(layer));
  }
  return result;
}

#define MVLIP_INSTANTIATE(T)                                                                    \
  template struct RbmVelocity<T>;                                                               \
  template GaussianRbm<T> make_rbm<T>(std::size_t, std::size_t, HiddenKind, double, Rng&);      \
  template Matrix<T> hidden_mean<T>(const GaussianRbm<T>&, const Matrix<T>&);                   \
  template double cd_update<T>(GaussianRbm<T>&, RbmVelocity<T>&, const Matrix<T>&,              \
                               const CdConfig&, std::size_t, Rng&);                             \
  template std::vector<double> train_rbm<T>(GaussianRbm<T>&, const Matrix<T>&, const CdConfig&, \
                                            Rng&);                                              \
  template PretrainResult<T> pretrain_stack<T>(const Matrix<T>&, const std::vector<std::size_t>&, \
                                               const CdConfig&, Rng&);

MVLIP_INSTANTIATE(float)
MVLIP_INSTANTIATE(double)

}  // namespace mvlip
