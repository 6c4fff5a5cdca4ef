// Copyright 2026 The mvlip Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "mvlip/ndcore.hpp"

namespace mvlip {

/// Most frequent label; ties go to the lowest class index.
std::size_t majority_vote(std::span<const std::size_t> frame_labels);

/// Per-row argmax followed by majority_vote.
template <typename T>
std::size_t decode_utterance(const Matrix<T>& frame_scores);

double utterance_accuracy(std::span<const std::size_t> predictions,
                          std::span<const std::size_t> labels);

/// Counts indexed [true class][predicted class].
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t classes)
      : classes_(classes), counts_(classes * classes, 0) {}

  std::size_t classes() const { return classes_; }
  std::size_t& at(std::size_t truth, std::size_t predicted);
  std::size_t at(std::size_t truth, std::size_t predicted) const;
  std::size_t row_sum(std::size_t truth) const;
  std::size_t trace() const;
  std::size_t total() const;
  bool operator==(const ConfusionMatrix&) const = default;

 private:
  std::size_t classes_;
  std::vector<std::size_t> counts_;
};

ConfusionMatrix confusion_matrix(std::span<const std::size_t> predictions,
                                 std::span<const std::size_t> labels, std::size_t classes);

struct RunStats {
  std::size_t count = 0;
  double mean = 0.0;
  std::optional<double> stddev;  // sample (n - 1) estimate, absent for a single run
  double max = 0.0;
};

RunStats run_stats(std::span<const double> values);

/// Utterance-level predictions of one evaluated run.
struct Predictions {
  std::vector<std::uint32_t> subjects;
  std::vector<std::size_t> labels;
  std::vector<std::size_t> predicted;

  double accuracy() const { return utterance_accuracy(predicted, labels); }
};

/// Accuracy of each subject in each run, summarised across runs.
std::map<std::uint32_t, RunStats> per_subject_accuracy(const std::vector<Predictions>& runs);

struct SignificanceResult {
  double welch_t = 0.0;
  double welch_df = 0.0;
  double welch_p = 1.0;
  double mann_whitney_u = 0.0;
  double mann_whitney_p = 1.0;
  bool significant = false;  // welch_p < alpha
};

/// Welch two-sample t-test, with a Mann-Whitney U test (normal approximation,
/// tie and continuity corrected) reported alongside. Needs >= 3 runs per side.
SignificanceResult significance_test(std::span<const double> a, std::span<const double> b,
                                     double alpha = 0.05);

}  // namespace mvlip
