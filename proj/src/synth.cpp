// Copyright 2026 The mvlip Authors
// SPDX-License-Identifier: Apache-2.0

#include "mvlip/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <tuple>

#include "mvlip/rng.hpp"

namespace mvlip {

namespace {

constexpr std::size_t kOracleFrames = 12;
constexpr std::size_t kOraclePool = 4;
constexpr double kEdge = 0.2;  // ellipse edge softness, in radii

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Block-averaged, time-resampled preprocessed frames.
Eigen::VectorXd oracle_features(const Utterance& utt) {
  const MatrixD frames = preprocess<double>(utt);
  const std::size_t h = utt.size.height;
  const std::size_t w = utt.size.width;
  const std::size_t bh = (h + kOraclePool - 1) / kOraclePool;
  const std::size_t bw = (w + kOraclePool - 1) / kOraclePool;
  MatrixD pooled = MatrixD::Zero(frames.rows(), static_cast<Eigen::Index>(bh * bw));
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      const auto col = static_cast<Eigen::Index>((i / kOraclePool) * bw + j / kOraclePool);
      pooled.col(col) += frames.col(static_cast<Eigen::Index>(i * w + j));
    }
  }
  const auto n = pooled.rows();
  Eigen::VectorXd out(static_cast<Eigen::Index>(kOracleFrames) * pooled.cols());
  for (std::size_t k = 0; k < kOracleFrames; ++k) {
    const double pos = n == 1 ? 0.0
                              : static_cast<double>(k) * static_cast<double>(n - 1) /
                                    static_cast<double>(kOracleFrames - 1);
    const auto lo = static_cast<Eigen::Index>(std::floor(pos));
    const auto hi = std::min<Eigen::Index>(lo + 1, n - 1);
    const double a = pos - static_cast<double>(lo);
    out.segment(static_cast<Eigen::Index>(k) * pooled.cols(), pooled.cols()) =
        ((1.0 - a) * pooled.row(lo) + a * pooled.row(hi)).transpose();
  }
  return out;
}

}  // namespace

std::string to_string(SynthMode mode) {
  return mode == SynthMode::separable ? "separable" : "complementary";
}

SynthMode parse_synth_mode(const std::string& text) {
  if (text == "separable") return SynthMode::separable;
  if (text == "complementary") return SynthMode::complementary;
  throw InvalidArgument("unknown synth mode '" + text + "'");
}

FrameSize SynthConfig::frame_size(ViewId view) const {
  if (auto it = frame_sizes.find(view); it != frame_sizes.end()) return it->second;
  const FrameSize roi = roi_size(view);
  auto scaled = [&](std::size_t n) {
    return std::max<std::size_t>(4, static_cast<std::size_t>(std::lround(scale * static_cast<double>(n))));
  };
  return {scaled(roi.height), scaled(roi.width)};
}

int SynthConfig::channel(ViewId view) const {
  if (auto it = channels.find(view); it != channels.end()) return it->second;
  const auto pos = std::find(views.begin(), views.end(), view);
  return static_cast<int>((pos - views.begin()) % 2);
}

void SynthConfig::validate() const {
  if (views.empty()) throw InvalidArgument("synth: at least one view is required");
  std::vector<ViewId> sorted = views;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw InvalidArgument("synth: duplicate view");
  }
  if (mode == SynthMode::complementary) {
    if (views.size() < 2) throw InvalidArgument("synth: complementary mode needs >= 2 views");
    if (num_classes < 4 || num_classes % 2 != 0) {
      throw InvalidArgument("synth: complementary mode needs an even class count >= 4");
    }
    bool c0 = false, c1 = false;
    for (const ViewId v : views) (channel(v) == 0 ? c0 : c1) = true;
    if (!c0 || !c1) throw InvalidArgument("synth: complementary mode needs both channels rendered");
  }
  if (num_classes < 2 || num_classes > 10) throw InvalidArgument("synth: num_classes must be 2..10");
  if (train_subjects == 0 || val_subjects == 0 || test_subjects == 0) {
    throw InvalidArgument("synth: every split needs at least one subject");
  }
  if (takes == 0) throw InvalidArgument("synth: takes must be >= 1");
  if (min_frames < 2 || max_frames < min_frames) throw InvalidArgument("synth: bad frame range");
  if (!(scale > 0.0)) throw InvalidArgument("synth: scale must be > 0");
  if (!(noise >= 0.0) || !(variation >= 0.0)) {
    throw InvalidArgument("synth: noise and variation must be >= 0");
  }
  for (const auto& [view, ch] : channels) {
    if (ch != 0 && ch != 1) throw InvalidArgument("synth: channel must be 0 or 1");
  }
}

std::pair<std::size_t, std::size_t> class_patterns(const SynthConfig& cfg, std::size_t label) {
  const std::size_t k = cfg.num_classes;
  if (cfg.mode == SynthMode::separable) return {label, k - 1 - label};
  const std::size_t half = k / 2;
  return {label % half, (label % half + label / half) % half};
}

double pattern_value(std::size_t p, double u) {
  const double freq = static_cast<double>(p / 2 + 1);
  const double sign = p % 2 == 0 ? 1.0 : -1.0;
  return sign * std::sin(freq * std::numbers::pi * u);
}

Utterance synth_utterance(const SynthConfig& cfg, std::uint32_t subject, std::size_t label,
                          std::uint16_t take, ViewId view) {
  const Rng root(cfg.seed);
  Rng subj = root.fork(0x5375626aULL).fork(subject);
  const double v = cfg.variation;
  const double off_x = v * subj.normal();
  const double off_y = v * subj.normal();
  const double radius = 1.0 + v * subj.normal();
  const double contrast = 1.0 + v * subj.normal();
  const double bias = v * subj.normal();

  Rng rec = root.fork(0x54616b65ULL).fork((std::uint64_t{subject} << 24) ^ (label << 8) ^ take);
  const std::size_t frames = cfg.min_frames + rec.below(cfg.max_frames - cfg.min_frames + 1);
  const double amp = 1.0 + v * rec.normal();
  const double shift = 0.05 * v * rec.normal();

  const int ch = cfg.channel(view);
  const auto patterns = class_patterns(cfg, label);
  const std::size_t p = ch == 0 ? patterns.first : patterns.second;
  const FrameSize size = cfg.frame_size(view);
  const double h = static_cast<double>(size.height);
  const double w = static_cast<double>(size.width);

  Rng noise = rec.fork(static_cast<std::uint64_t>(view.degrees()) + 1);
  Utterance utt;
  utt.subject = subject;
  utt.label = static_cast<std::uint16_t>(label);
  utt.view = view;
  utt.take = take;
  utt.size = size;
  utt.frames.resize(static_cast<Eigen::Index>(frames), static_cast<Eigen::Index>(size.pixels()));
  for (std::size_t t = 0; t < frames; ++t) {
    const double u = std::clamp(static_cast<double>(t) / static_cast<double>(frames - 1) + shift,
                                0.0, 1.0);
    const double x = amp * pattern_value(p, u);
    double cx = w * (0.5 + 0.05 * off_x);
    const double cy = h * (0.5 + 0.05 * off_y);
    double rx = 0.3 * w * radius;
    double ry = 0.22 * h * radius;
    if (ch == 0) {
      ry *= 1.0 + 0.45 * x;
    } else {
      rx *= 1.0 + 0.3 * x;
      cx += 0.12 * w * x;
    }
    for (std::size_t i = 0; i < size.height; ++i) {
      for (std::size_t j = 0; j < size.width; ++j) {
        const double dx = (static_cast<double>(j) + 0.5 - cx) / rx;
        const double dy = (static_cast<double>(i) + 0.5 - cy) / ry;
        const double d = std::sqrt(dx * dx + dy * dy);
        const double value = bias + contrast * sigmoid((1.0 - d) / kEdge) + cfg.noise * noise.normal();
        utt.frames(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(i * size.width + j)) =
            static_cast<float>(value);
      }
    }
  }
  return utt;
}

OracleReport template_oracle(const DatasetManifest& manifest) {
  using Key = std::tuple<std::uint32_t, std::uint16_t, std::uint16_t>;
  const std::vector<ViewId> views = manifest.views();
  struct Item {
    Split split = Split::unassigned;
    std::size_t label = 0;
    std::map<ViewId, Eigen::VectorXd> features;
  };
  std::map<Key, Item> items;
  for (const ManifestEntry& e : manifest.entries) {
    if (e.split == Split::unassigned) continue;
    Item& item = items[{e.subject, e.label, e.take}];
    item.split = e.split;
    item.label = e.label;
    item.features[e.view] = oracle_features(read_utterance(manifest.root / e.path));
  }

  auto score = [&](auto&& feature_of) {
    std::vector<Eigen::VectorXd> sums(manifest.num_classes);
    std::vector<double> counts(manifest.num_classes, 0.0);
    for (const auto& [key, item] : items) {
      if (item.split == Split::test) continue;
      const Eigen::VectorXd f = feature_of(item);
      if (sums[item.label].size() == 0) sums[item.label] = Eigen::VectorXd::Zero(f.size());
      sums[item.label] += f;
      counts[item.label] += 1.0;
    }
    std::size_t correct = 0, total = 0;
    for (const auto& [key, item] : items) {
      if (item.split != Split::test) continue;
      const Eigen::VectorXd f = feature_of(item);
      std::size_t best = 0;
      double best_d = INFINITY;
      for (std::size_t c = 0; c < sums.size(); ++c) {
        if (counts[c] == 0.0) continue;
        const double d = (f - sums[c] / counts[c]).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      correct += best == item.label;
      ++total;
    }
    if (total == 0) throw DataError("template oracle: no test utterances");
    return static_cast<double>(correct) / static_cast<double>(total);
  };

  OracleReport report;
  for (const ViewId v : views) {
    report.per_view[v] = score([&](const Item& item) -> Eigen::VectorXd { return item.features.at(v); });
  }
  report.union_accuracy = score([&](const Item& item) {
    Eigen::Index n = 0;
    for (const auto& [v, f] : item.features) n += f.size();
    Eigen::VectorXd all(n);
    Eigen::Index at = 0;
    for (const auto& [v, f] : item.features) {
      all.segment(at, f.size()) = f;
      at += f.size();
    }
    return all;
  });
  return report;
}

DatasetManifest synth_generate(const SynthConfig& cfg, const std::filesystem::path& out_dir) {
  cfg.validate();
  const std::filesystem::path utt_dir = out_dir / "utterances";
  std::filesystem::create_directories(utt_dir);
  DatasetManifest m;
  m.num_classes = cfg.num_classes;
  m.root = out_dir;
  for (const ViewId v : cfg.views) m.view_sizes[v] = cfg.frame_size(v);
  const std::size_t n_subjects = cfg.train_subjects + cfg.val_subjects + cfg.test_subjects;
  char name[96];
  for (std::uint32_t s = 1; s <= n_subjects; ++s) {
    const Split split = s <= cfg.train_subjects                    ? Split::train
                        : s <= cfg.train_subjects + cfg.val_subjects ? Split::val
                                                                     : Split::test;
    for (std::size_t c = 0; c < cfg.num_classes; ++c) {
      for (std::uint16_t take = 0; take < cfg.takes; ++take) {
        for (const ViewId v : cfg.views) {
          std::snprintf(name, sizeof name, "utterances/s%03u_c%02zu_t%u_v%d.mvlu", s, c,
                        static_cast<unsigned>(take), v.degrees());
          write_utterance(synth_utterance(cfg, s, c, take, v), out_dir / name);
          m.entries.push_back({name, s, static_cast<std::uint16_t>(c), v, take, split});
        }
      }
    }
  }
  m.validate();
  const OracleReport oracle = template_oracle(m);
  for (const auto& [v, acc] : oracle.per_view) {
    m.oracle_accuracies.emplace_back("view:" + std::to_string(v.degrees()), acc);
    if (oracle.union_accuracy < acc) {
      throw DataError("synth: union template accuracy " + std::to_string(oracle.union_accuracy) +
                      " is below view " + to_string(v) + " (" + std::to_string(acc) + ")");
    }
  }
  m.oracle_accuracies.emplace_back("union", oracle.union_accuracy);
  write_manifest(m, out_dir / "manifest.tsv");
  return m;
}

}  // namespace mvlip
