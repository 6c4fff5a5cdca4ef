// Copyright 2026 The mvlip Authors
// SPDX-License-Identifier: Apache-2.0

// Experiment configuration as `key = value` text. Files are applied first,
// then `--set key=value` overrides; unknown keys are rejected.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mvlip/gradcheck.hpp"
#include "mvlip/ndcore.hpp"
#include "mvlip/sweep.hpp"
#include "mvlip/synth.hpp"

namespace mvlip {

class ConfigError : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

struct ExperimentConfig {
  Precision precision = Precision::f32;
  std::uint64_t seed = 0;
  bool deterministic = true;

  PipelineConfig pipeline;  // model.*, rbm.*, train.*
  SynthConfig synth;        // synth.*
  GradcheckConfig gradcheck;

  // split.*: reassign subjects with split_subjects() when `resplit` is set.
  bool resplit = false;
  std::size_t split_train = 35;
  std::size_t split_val = 5;
  std::size_t split_test = 12;

  std::vector<std::vector<ViewId>> sweep_subsets;  // empty: all
  std::size_t sweep_runs = 10;
  std::size_t jobs = 1;

  void set(const std::string& key, const std::string& value);
  /// Every key in a fixed order, values in a form `set` parses back exactly.
  std::string to_text() const;
  void validate() const;
};

std::vector<std::string> config_keys();

/// Applies the `key = value` lines of `text` ('#' starts a comment).
void apply_config_text(ExperimentConfig& cfg, const std::string& text, const std::string& source);

/// Defaults, then `path` (if non-empty), then each "key=value" override.
ExperimentConfig load_config(const std::filesystem::path& path,
                             const std::vector<std::string>& overrides);

}  // namespace mvlip
