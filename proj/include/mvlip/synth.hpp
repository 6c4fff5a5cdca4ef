// Copyright 2026 The mvlip Authors
// SPDX-License-Identifier: Apache-2.0

// Synthetic multi-view "lip" videos. Every class owns a two-channel latent
// trajectory; each view renders one channel as a moving ellipse. In
// complementary mode a single channel is shared by pairs of classes, so only
// the union of views identifies the class.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "mvlip/data.hpp"

namespace mvlip {

enum class SynthMode { separable, complementary };

std::string to_string(SynthMode mode);
SynthMode parse_synth_mode(const std::string& text);

struct SynthConfig {
  SynthMode mode = SynthMode::separable;
  std::vector<ViewId> views{ViewId::from_degrees(0)};
  std::size_t num_classes = 10;
  std::size_t train_subjects = 20;
  std::size_t val_subjects = 5;
  std::size_t test_subjects = 10;
  std::size_t takes = 3;
  std::size_t min_frames = 14;
  std::size_t max_frames = 22;
  double scale = 1.0;                        // applied to the ROI size of each view
  std::map<ViewId, FrameSize> frame_sizes;   // explicit sizes win over scale
  std::map<ViewId, int> channels;            // default: alternate 0, 1 by view order
  double noise = 0.05;                       // pixel noise standard deviation
  double variation = 0.1;                    // subject and take nuisance scale
  std::uint64_t seed = 0;

  FrameSize frame_size(ViewId view) const;
  int channel(ViewId view) const;
  void validate() const;
};

/// Pattern index of latent channel 0 and 1 for `label`.
std::pair<std::size_t, std::size_t> class_patterns(const SynthConfig& cfg, std::size_t label);

/// Value in [-1, 1] of pattern `p` at normalised time u in [0, 1].
double pattern_value(std::size_t p, double u);

/// Renders one take of one view. Deterministic in (cfg.seed, subject, label,
/// take, view).
Utterance synth_utterance(const SynthConfig& cfg, std::uint32_t subject, std::size_t label,
                          std::uint16_t take, ViewId view);

/// Nearest class-mean template accuracy on the test split, per view and for
/// the concatenation of all views. Templates come from train and val.
struct OracleReport {
  std::map<ViewId, double> per_view;
  double union_accuracy = 0.0;
};

OracleReport template_oracle(const DatasetManifest& manifest);

/// Writes utterances/ and manifest.tsv under `out_dir` with splits assigned
/// and oracle accuracies recorded. Throws DataError if the union oracle scores
/// below a single view.
DatasetManifest synth_generate(const SynthConfig& cfg, const std::filesystem::path& out_dir);

}  // namespace mvlip
