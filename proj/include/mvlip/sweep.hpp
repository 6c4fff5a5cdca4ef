// Copyright 2026 The mvlip Authors
// SPDX-License-Identifier: Apache-2.0

// End-to-end pipeline pieces (pretrain, single stream, fused model) and the
// view-combination sweep that repeats them over seeds and subsets.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mvlip/metrics.hpp"
#include "mvlip/rbm.hpp"
#include "mvlip/train.hpp"

namespace mvlip {

/// All training frames of `view`, one per row.
template <typename T>
Matrix<T> stack_frames(const std::vector<Example<T>>& examples, ViewId view);

/// Greedy RBM pretraining of the bottleneck encoder of `view`.
template <typename T>
PretrainResult<T> pretrain_view(const DatasetSplits<T>& data, const ModelConfig& model,
                                ViewId view, const CdConfig& rbm, Rng& rng);

struct PipelineConfig {
  ModelConfig model;
  CdConfig rbm;
  bool pretrain = true;
  TrainConfig train;
};

template <typename T>
struct StreamRun {
  StreamParams<T> model;
  RunRecord record;
};

/// Pretrain (optional), build and train the single stream for `view`. All
/// randomness derives from `seed`.
template <typename T>
StreamRun<T> run_single_stream(const PipelineConfig& cfg, const DatasetSplits<T>& data,
                               ViewId view, std::uint64_t seed);

template <typename T>
struct FusedRun {
  MultiViewParams<T> model;
  RunRecord record;
};

/// Builds the multi-view model for `views` on top of trained streams and
/// fine-tunes it jointly.
template <typename T>
FusedRun<T> run_fusion(const PipelineConfig& cfg, const DatasetSplits<T>& data,
                       const std::map<ViewId, StreamParams<T>>& streams,
                       const std::vector<ViewId>& views, std::uint64_t seed);

struct SweepSpec {
  std::vector<std::vector<ViewId>> subsets;  // empty: every non-empty subset of the data views
  std::size_t runs = 10;
  std::uint64_t base_seed = 0;
  PipelineConfig pipeline;
  std::size_t jobs = 1;
  std::string config_text;  // copied into every run log

  void validate() const;
};

std::uint64_t run_seed(std::uint64_t base_seed, std::size_t run);

struct SubsetResult {
  std::vector<ViewId> views;
  std::string label;
  std::vector<double> test_accuracy;  // one per run
  std::vector<double> val_accuracy;   // at each run's best epoch
  RunStats stats;
  std::size_t best_run_by_test = 0;
  std::size_t best_run_by_val = 0;
  double max_by_val = 0.0;  // test accuracy of the best-by-validation run
  std::optional<SignificanceResult> vs_baseline;
  std::map<std::uint32_t, RunStats> per_subject;
  ConfusionMatrix confusion{0};  // best-by-test run
};

struct SweepReport {
  std::size_t runs = 0;
  std::size_t num_classes = 0;
  std::vector<SubsetResult> rows;
};

/// Runs the sweep. When `out_dir` is non-empty, checkpoints and run logs are
/// written under it as runs complete.
template <typename T>
SweepReport run_sweep(const SweepSpec& spec, const DatasetSplits<T>& data,
                      const std::filesystem::path& out_dir = {},
                      const std::function<void(const std::string&)>& log = {});

std::string format_report_text(const SweepReport& report);
std::string format_report_tsv(const SweepReport& report);
std::string format_report_json(const SweepReport& report);

/// report.txt, report.tsv, report.json, confusion/<subset>.csv and
/// per_subject/<subset>.csv.
void write_report(const SweepReport& report, const std::filesystem::path& out_dir);

std::string confusion_csv(const ConfusionMatrix& confusion);

}  // namespace mvlip
