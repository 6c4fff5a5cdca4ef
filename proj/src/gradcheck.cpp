// Copyright 2026 The mvlip Authors
// SPDX-License-Identifier: Apache-2.0

#include "mvlip/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "mvlip/model.hpp"
#include "mvlip/train.hpp"

namespace mvlip {

namespace {

using Mat = MatrixD;

struct Probe {
  std::string name;
  double* values;
  const double* analytic;
  std::size_t size;
};

template <typename Tensor>
Probe probe(std::string name, Tensor& value, const Tensor& analytic) {
  return {std::move(name), value.data(), analytic.data(), static_cast<std::size_t>(value.size())};
}

// Loss plus a hash of every rectifier's on/off state; a stencil whose points
// see different states straddles a kink where no derivative exists.
using LossFn = std::function<double(std::uint64_t*)>;

std::uint64_t relu_pattern(const std::vector<Mat>& activations, std::uint64_t h = 1469598103934665603ULL) {
  for (const Mat& a : activations) {
    for (Eigen::Index i = 0; i < a.size(); ++i) {
      h = (h ^ static_cast<std::uint64_t>(a.data()[i] > 0.0)) * 1099511628211ULL;
    }
  }
  return h;
}

void compare(const std::vector<Probe>& probes, const LossFn& loss, const GradcheckConfig& cfg,
             GradcheckCase& out) {
  std::uint64_t base = 0;
  loss(&base);
  for (const Probe& p : probes) {
    for (std::size_t i = 0; i < p.size; ++i) {
      const double saved = p.values[i];
      bool kink = false;
      auto at = [&](double offset) {
        p.values[i] = saved + offset;
        std::uint64_t pattern = 0;
        const double v = loss(&pattern);
        p.values[i] = saved;
        kink = kink || pattern != base;
        return v;
      };
      const double h = cfg.step;
      double numeric = (at(h) - at(-h)) / (2.0 * h);
      if (cfg.order == 4) numeric = (4.0 * numeric - (at(2 * h) - at(-2 * h)) / (4.0 * h)) / 3.0;
      if (kink) {
        ++out.skipped_kinks;
        continue;
      }
      const double a = p.analytic[i];
      const double rel =
          std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), cfg.floor});
      ++out.entries;
      if (rel > out.max_rel_error || std::isnan(rel)) {
        out.max_rel_error = std::isnan(rel) ? INFINITY : rel;
        out.worst = p.name + "[" + std::to_string(i) + "] analytic " + std::to_string(a) +
                    " numeric " + std::to_string(numeric);
      }
    }
  }
}

Mat random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng, double scale = 1.0) {
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

SequenceLayout random_layout(const GradcheckConfig& cfg, Rng& rng) {
  std::vector<std::size_t> lengths;
  for (std::size_t u = 0; u < cfg.utterances; ++u) lengths.push_back(1 + rng.below(cfg.max_frames));
  return SequenceLayout::from_lengths(lengths);
}

std::vector<std::size_t> random_labels(std::size_t n, std::size_t classes, Rng& rng) {
  std::vector<std::size_t> labels;
  for (std::size_t i = 0; i < n; ++i) labels.push_back(rng.below(classes));
  return labels;
}

// Moves every parameter off its structured initial value (zero biases, unit
// forget bias) so no gradient is trivially symmetric.
template <typename Model>
void jitter(Model& model, Rng& rng) {
  for_each_tensor(
      [&](const std::string&, TensorInfo, auto& t) {
        for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] += 0.1 * rng.normal();
      },
      model);
}

template <typename Model>
std::vector<Probe> model_probes(Model& model, const Model& grad) {
  std::vector<Probe> probes;
  for_each_tensor(
      [&](const std::string& name, TensorInfo, auto& p, const auto& g) {
        probes.push_back(probe(name, p, g));
      },
      model, grad);
  return probes;
}

ModelConfig toy_model(const GradcheckConfig& cfg, std::vector<ViewId> views) {
  ModelConfig m;
  m.views = std::move(views);
  const std::size_t w = std::max<std::size_t>(1, cfg.input_dim / 3);
  for (const ViewId v : m.views) m.frame_sizes[v] = {cfg.input_dim / w, w};
  m.encoder_sizes = {6, 5, 4};
  m.bottleneck_dim = 3;
  m.stream_hidden = cfg.hidden;
  m.fusion_hidden = cfg.hidden;
  m.num_classes = cfg.classes;
  return m;
}

void check_encoder(std::uint64_t seed, const GradcheckConfig& cfg, GradcheckCase& out) {
  Rng rng(seed);
  const SequenceLayout layout = random_layout(cfg, rng);
  const auto n = static_cast<Eigen::Index>(layout.total_frames);
  EncoderParams<double> enc = make_encoder<double>({cfg.input_dim, 6, 5, 4, 3}, rng);
  for (auto& layer : enc.layers) {
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias(i) = 0.1 * rng.normal();
  }
  Mat x = random_matrix(n, static_cast<Eigen::Index>(cfg.input_dim), rng);
  const Mat r = random_matrix(n, 3, rng);
  auto run = [&](std::vector<Mat>* acts) {
    Mat h = x;
    if (acts) acts->push_back(h);
    for (const auto& layer : enc.layers) {
      h = dense_forward(layer, h);
      if (acts) acts->push_back(h);
    }
    return h;
  };
  std::vector<Mat> acts;
  run(&acts);
  EncoderParams<double> grad = enc;
  for (auto& layer : grad.layers) {
    layer.weight.setZero();
    layer.bias.setZero();
  }
  Mat d = r;
  for (std::size_t k = enc.layers.size(); k-- > 0;) {
    d = dense_backward(enc.layers[k], acts[k], acts[k + 1], d, grad.layers[k]);
  }
  std::vector<Probe> probes;
  for (std::size_t k = 0; k < enc.layers.size(); ++k) {
    probes.push_back(probe("encoder/" + std::to_string(k) + "/weight", enc.layers[k].weight,
                           grad.layers[k].weight));
    probes.push_back(probe("encoder/" + std::to_string(k) + "/bias", enc.layers[k].bias,
                           grad.layers[k].bias));
  }
  probes.push_back(probe("input", x, d));
  compare(
      probes,
      [&](std::uint64_t* pattern) {
        std::vector<Mat> a;
        const double l = run(&a).cwiseProduct(r).sum();
        a.erase(a.begin());
        a.pop_back();
        *pattern = relu_pattern(a);
        return l;
      },
      cfg, out);
}

void check_delta(std::uint64_t seed, const GradcheckConfig& cfg, GradcheckCase& out) {
  Rng rng(seed);
  const DeltaConfig delta;
  const auto t = static_cast<Eigen::Index>(1 + rng.below(cfg.max_frames));
  Mat x = random_matrix(t, 4, rng);
  const Mat r = random_matrix(t, 12, rng);
  const Mat dx = delta_backward<double>(r, delta);
  compare({probe("input", x, dx)},
          [&](std::uint64_t*) { return delta_features<double>(x, delta).cwiseProduct(r).sum(); },
          cfg, out);
}

void check_blstm(std::uint64_t seed, const GradcheckConfig& cfg, bool forward_only,
                 GradcheckCase& out) {
  Rng rng(seed);
  const SequenceLayout layout = random_layout(cfg, rng);
  const auto n = static_cast<Eigen::Index>(layout.total_frames);
  const auto h = static_cast<Eigen::Index>(cfg.hidden);
  BlstmParams<double> params = make_blstm<double>(cfg.input_dim, cfg.hidden, rng, 1.0);
  for (LstmParams<double>* l : {&params.forward, &params.backward}) {
    for (Eigen::Index i = 0; i < l->bias.size(); ++i) l->bias(i) += 0.1 * rng.normal();
  }
  Mat x = random_matrix(n, static_cast<Eigen::Index>(cfg.input_dim), rng);
  Mat r = random_matrix(n, 2 * h, rng);
  if (forward_only) r.rightCols(h).setZero();
  BlstmCache<double> cache;
  blstm_forward(params, x, layout, &cache);
  BlstmParams<double> grad = params;
  for (LstmParams<double>* l : {&grad.forward, &grad.backward}) {
    l->w_input.setZero();
    l->w_hidden.setZero();
    l->bias.setZero();
  }
  const Mat dx = blstm_backward(params, cache, r, grad);
  std::vector<Probe> probes;
  auto add = [&](const std::string& dir, LstmParams<double>& p, const LstmParams<double>& g) {
    probes.push_back(probe(dir + "/w_input", p.w_input, g.w_input));
    probes.push_back(probe(dir + "/w_hidden", p.w_hidden, g.w_hidden));
    probes.push_back(probe(dir + "/bias", p.bias, g.bias));
  };
  add("forward", params.forward, grad.forward);
  if (!forward_only) add("backward", params.backward, grad.backward);
  probes.push_back(probe("input", x, dx));
  compare(
      probes,
      [&](std::uint64_t*) { return blstm_forward(params, x, layout).cwiseProduct(r).sum(); }, cfg,
      out);
}

void check_head(std::uint64_t seed, const GradcheckConfig& cfg, GradcheckCase& out) {
  Rng rng(seed);
  const SequenceLayout layout = random_layout(cfg, rng);
  const auto n = static_cast<Eigen::Index>(layout.total_frames);
  DenseLayer<double> head = make_dense<double>(2 * cfg.hidden, cfg.classes, Activation::linear, rng);
  for (Eigen::Index i = 0; i < head.bias.size(); ++i) head.bias(i) = 0.1 * rng.normal();
  Mat x = random_matrix(n, static_cast<Eigen::Index>(2 * cfg.hidden), rng);
  const std::vector<std::size_t> labels = random_labels(layout.size(), cfg.classes, rng);
  const Mat logits = dense_forward(head, x);
  const LossResult<double> loss = batch_cross_entropy<double>(logits, layout, labels);
  DenseLayer<double> grad = head;
  grad.weight.setZero();
  grad.bias.setZero();
  const Mat dx = dense_backward(head, x, logits, loss.d_logits, grad);
  compare({probe("head/weight", head.weight, grad.weight), probe("head/bias", head.bias, grad.bias),
           probe("input", x, dx)},
          [&](std::uint64_t*) {
            return batch_cross_entropy<double>(dense_forward(head, x), layout, labels).loss;
          },
          cfg, out);
}

template <typename Model>
void check_model(Model& model, const PackedInputs<double>& inputs,
                 const std::vector<std::size_t>& labels, const GradcheckConfig& cfg,
                 GradcheckCase& out) {
  ModelTrace<double> trace;
  const Mat logits = forward_logits(model, inputs, &trace);
  const LossResult<double> loss = batch_cross_entropy<double>(logits, inputs.layout, labels);
  Model grad = zeros_like(model);
  backward(model, trace, loss.d_logits, grad);
  compare(
      model_probes(model, grad),
      [&](std::uint64_t* pattern) {
        ModelTrace<double> tr;
        const double l =
            batch_cross_entropy<double>(forward_logits(model, inputs, &tr), inputs.layout, labels)
                .loss;
        std::uint64_t h = 1469598103934665603ULL;
        for (const auto& [view, st] : tr.streams) {
          // inner encoder layers are rectified; input and bottleneck are not
          h = relu_pattern({st.activations.begin() + 1, st.activations.end() - 1}, h);
        }
        *pattern = h;
        return l;
      },
      cfg, out);
}

void check_stream(std::uint64_t seed, const GradcheckConfig& cfg, GradcheckCase& out) {
  Rng rng(seed);
  const ViewId view = ViewId::from_degrees(0);
  const ModelConfig mc = toy_model(cfg, {view});
  StreamParams<double> stream = build_stream<double>(mc, view, std::nullopt, rng);
  jitter(stream, rng);
  PackedInputs<double> inputs;
  inputs.layout = random_layout(cfg, rng);
  inputs.frames[view] = random_matrix(static_cast<Eigen::Index>(inputs.layout.total_frames),
                                      static_cast<Eigen::Index>(mc.input_dim(view)), rng);
  const auto labels = random_labels(inputs.layout.size(), cfg.classes, rng);
  check_model(stream, inputs, labels, cfg, out);
}

void check_multiview(std::uint64_t seed, const GradcheckConfig& cfg, GradcheckCase& out) {
  Rng rng(seed);
  const std::vector<ViewId> views{ViewId::from_degrees(0), ViewId::from_degrees(90)};
  ModelConfig mc = toy_model(cfg, views);
  mc.frame_sizes[views[1]] = {mc.frame_sizes[views[0]].width, mc.frame_sizes[views[0]].height};
  std::map<ViewId, StreamParams<double>> streams;
  for (const ViewId v : views) streams.emplace(v, build_stream<double>(mc, v, std::nullopt, rng));
  MultiViewParams<double> model = build_multiview(streams, mc, rng);
  jitter(model, rng);
  PackedInputs<double> inputs;
  inputs.layout = random_layout(cfg, rng);
  for (const ViewId v : views) {
    inputs.frames[v] = random_matrix(static_cast<Eigen::Index>(inputs.layout.total_frames),
                                     static_cast<Eigen::Index>(mc.input_dim(v)), rng);
  }
  const auto labels = random_labels(inputs.layout.size(), cfg.classes, rng);
  check_model(model, inputs, labels, cfg, out);
}

}  // namespace

std::vector<std::string> gradcheck_components() {
  return {"encoder", "delta", "lstm", "blstm", "softmax_head", "stream", "multiview"};
}

GradcheckCase gradcheck_component(const std::string& component, std::uint64_t seed,
                                  const GradcheckConfig& cfg) {
  GradcheckCase out;
  out.component = component;
  out.seed = seed;
  if (component == "encoder") {
    check_encoder(seed, cfg, out);
  } else if (component == "delta") {
    check_delta(seed, cfg, out);
  } else if (component == "lstm") {
    check_blstm(seed, cfg, true, out);
  } else if (component == "blstm") {
    check_blstm(seed, cfg, false, out);
  } else if (component == "softmax_head") {
    check_head(seed, cfg, out);
  } else if (component == "stream") {
    check_stream(seed, cfg, out);
  } else if (component == "multiview") {
    check_multiview(seed, cfg, out);
  } else {
    throw InvalidArgument("gradcheck: unknown component '" + component + "'");
  }
  return out;
}

GradcheckReport run_gradcheck(const GradcheckConfig& cfg) {
  if (cfg.seeds == 0 || !(cfg.step > 0.0) || (cfg.order != 2 && cfg.order != 4) || cfg.input_dim == 0 || cfg.hidden == 0 ||
      cfg.max_frames == 0 || cfg.utterances == 0 || cfg.classes < 2) {
    throw InvalidArgument("gradcheck: invalid configuration");
  }
  GradcheckReport report;
  for (const std::string& component : gradcheck_components()) {
    for (std::size_t s = 0; s < cfg.seeds; ++s) {
      GradcheckCase c = gradcheck_component(component, cfg.base_seed + s, cfg);
      report.max_rel_error = std::max(report.max_rel_error, c.max_rel_error);
      report.entries += c.entries;
      report.skipped_kinks += c.skipped_kinks;
      report.cases.push_back(std::move(c));
    }
  }
  report.passed = report.max_rel_error < cfg.tolerance;
  return report;
}

}  // namespace mvlip
