// Copyright 2026 The mvlip Authors
// SPDX-License-Identifier: Apache-2.0

// Central-difference verification of every backward pass, in double
// precision at toy sizes.

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace mvlip {

struct GradcheckConfig {
  std::size_t seeds = 20;
  std::uint64_t base_seed = 1;
  double step = 1e-4;
  int order = 4;  // central stencil: 2 (two points) or 4 (four points)
  double tolerance = 1e-5;
  // Denominator floor of the relative error, so entries whose true gradient
  // is zero are judged by absolute error.
  double floor = 1e-6;
  std::size_t input_dim = 12;
  std::size_t hidden = 4;
  std::size_t max_frames = 5;
  std::size_t utterances = 2;
  std::size_t classes = 3;
};

struct GradcheckCase {
  std::string component;
  std::uint64_t seed = 0;
  std::size_t entries = 0;
  std::size_t skipped_kinks = 0;  // stencil crossed a rectifier kink
  double max_rel_error = 0.0;
  std::string worst;  // tensor and index of the largest error
};

struct GradcheckReport {
  std::vector<GradcheckCase> cases;
  double max_rel_error = 0.0;
  std::size_t entries = 0;
  std::size_t skipped_kinks = 0;
  bool passed = false;
};

/// Components: encoder, delta, lstm, blstm, softmax_head, stream, multiview.
std::vector<std::string> gradcheck_components();

GradcheckCase gradcheck_component(const std::string& component, std::uint64_t seed,
                                  const GradcheckConfig& cfg);

GradcheckReport run_gradcheck(const GradcheckConfig& cfg);

}  // namespace mvlip
