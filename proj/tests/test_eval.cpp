// Copyright 2026 The mvlip Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <set>

#include "mvlip/metrics.hpp"
#include "mvlip/sweep.hpp"
#include "mvlip/synth.hpp"
#include "test_util.hpp"

namespace mvlip {
namespace {

TEST(MajorityVote, Examples) {
  EXPECT_EQ(majority_vote(std::vector<std::size_t>{3, 3, 8, 3}), 3u);
  EXPECT_EQ(majority_vote(std::vector<std::size_t>{1, 2}), 1u);
  EXPECT_EQ(majority_vote(std::vector<std::size_t>{2, 1}), 1u);
  EXPECT_EQ(majority_vote(std::vector<std::size_t>{7}), 7u);
  EXPECT_THROW(majority_vote(std::vector<std::size_t>{}), InvalidArgument);
}

TEST(Decode, ArgmaxThenVote) {
  MatrixD scores(3, 3);
  scores << 0.1, 0.8, 0.1,
            0.6, 0.3, 0.1,
            0.2, 0.7, 0.1;
  EXPECT_EQ(decode_utterance(scores), 1u);
}

TEST(Accuracy, AllCorrectIsDiagonal) {
  const std::vector<std::size_t> labels{0, 1, 2, 2, 1};
  EXPECT_EQ(utterance_accuracy(labels, labels), 1.0);
  const auto cm = confusion_matrix(labels, labels, 3);
  EXPECT_EQ(cm.trace(), 5u);
  EXPECT_EQ(cm.total(), 5u);
}

TEST(Accuracy, HalfCorrectTwoClasses) {
  const std::vector<std::size_t> labels{0, 0, 1, 1};
  const std::vector<std::size_t> pred{0, 1, 1, 0};
  EXPECT_EQ(utterance_accuracy(pred, labels), 0.5);
  const auto cm = confusion_matrix(pred, labels, 2);
  EXPECT_EQ(cm.at(0, 0), 1u);
  EXPECT_EQ(cm.at(0, 1), 1u);
  EXPECT_EQ(cm.at(1, 0), 1u);
  EXPECT_EQ(cm.at(1, 1), 1u);
  EXPECT_THROW(utterance_accuracy(pred, std::vector<std::size_t>{0}), InvalidArgument);
}

TEST(Accuracy, ProtocolRowsSumToThirtySix) {
  Rng rng(5);
  std::vector<std::size_t> labels, pred;
  for (int subject = 0; subject < 12; ++subject) {
    for (std::size_t c = 0; c < 10; ++c) {
      for (int take = 0; take < 3; ++take) {
        labels.push_back(c);
        pred.push_back(rng.below(10));
      }
    }
  }
  const auto cm = confusion_matrix(pred, labels, 10);
  for (std::size_t c = 0; c < 10; ++c) EXPECT_EQ(cm.row_sum(c), 36u);
}

TEST(RunStats, Examples) {
  auto s = run_stats(std::vector<double>{0.9, 0.9, 0.9});
  EXPECT_DOUBLE_EQ(s.mean, 0.9);
  ASSERT_TRUE(s.stddev);
  EXPECT_NEAR(*s.stddev, 0.0, 1e-15);

  s = run_stats(std::vector<double>{0.8, 1.0});
  EXPECT_DOUBLE_EQ(s.mean, 0.9);
  EXPECT_NEAR(*s.stddev, 0.1414213562, 1e-9);
  EXPECT_EQ(s.max, 1.0);

  s = run_stats(std::vector<double>{0.7});
  EXPECT_EQ(s.mean, 0.7);
  EXPECT_FALSE(s.stddev.has_value());
}

TEST(PerSubject, AveragesAcrossRuns) {
  Predictions a{{1, 1, 2, 2}, {0, 1, 0, 1}, {0, 1, 1, 1}};
  Predictions b{{1, 1, 2, 2}, {0, 1, 0, 1}, {1, 1, 0, 1}};
  const auto per = per_subject_accuracy({a, b});
  ASSERT_EQ(per.size(), 2u);
  EXPECT_DOUBLE_EQ(per.at(1).mean, 0.75);
  EXPECT_DOUBLE_EQ(per.at(2).mean, 0.75);
  EXPECT_NEAR(*per.at(1).stddev, std::sqrt(0.125), 1e-12);
}

// Exact two-sided permutation p-value of the mean difference.
double permutation_p(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> pooled(a);
  pooled.insert(pooled.end(), b.begin(), b.end());
  const double total = std::accumulate(pooled.begin(), pooled.end(), 0.0);
  const std::size_t n = pooled.size(), k = a.size();
  const double observed = std::abs(std::accumulate(a.begin(), a.end(), 0.0) / k -
                                   std::accumulate(b.begin(), b.end(), 0.0) / (n - k));
  std::vector<bool> pick(n, false);
  std::fill(pick.begin(), pick.begin() + static_cast<long>(k), true);
  std::size_t extreme = 0, count = 0;
  do {
    double sa = 0.0;
    for (std::size_t i = 0; i < n; ++i) if (pick[i]) sa += pooled[i];
    const double diff = std::abs(sa / k - (total - sa) / (n - k));
    if (diff >= observed - 1e-12) ++extreme;
    ++count;
  } while (std::prev_permutation(pick.begin(), pick.end()));
  return static_cast<double>(extreme) / static_cast<double>(count);
}

TEST(Significance, IdenticalSamples) {
  const std::vector<double> a{0.9, 0.91, 0.89, 0.9};
  const auto r = significance_test(a, a);
  EXPECT_NEAR(r.welch_p, 1.0, 1e-12);
  EXPECT_FALSE(r.significant);
}

TEST(Significance, ClearSeparationAgreesWithPermutationTest) {
  Rng rng(8);
  std::vector<double> a, b;
  for (int i = 0; i < 10; ++i) {
    a.push_back(0.99 + 0.002 * rng.normal());
    b.push_back(0.80 + 0.002 * rng.normal());
  }
  const auto r = significance_test(a, b);
  const double exact = permutation_p(a, b);
  EXPECT_LT(exact, 0.001);
  EXPECT_LT(r.welch_p, 0.001);
  EXPECT_LT(r.mann_whitney_p, 0.001);
  EXPECT_TRUE(r.significant);
}

TEST(Significance, DecisionsTrackPermutationTest) {
  // On overlapping samples both tests should land on the same side of 0.05
  // unless the exact p-value sits close to the threshold.
  Rng rng(12);
  int agree = 0, compared = 0;
  for (int trial = 0; trial < 40; ++trial) {
    std::vector<double> a, b;
    const double shift = 0.5 * static_cast<double>(trial % 5);
    for (int i = 0; i < 6; ++i) {
      a.push_back(rng.normal() + shift);
      b.push_back(rng.normal());
    }
    const double exact = permutation_p(a, b);
    if (std::abs(exact - 0.05) < 0.03) continue;
    ++compared;
    if ((exact < 0.05) == significance_test(a, b).significant) ++agree;
  }
  ASSERT_GT(compared, 20);
  EXPECT_GE(agree, compared - 1);
}

TEST(Significance, NeedsThreeRuns) {
  EXPECT_THROW(significance_test(std::vector<double>{1, 2}, std::vector<double>{1, 2, 3}),
               InvalidArgument);
}

TEST(Sweep, RunSeedsAreDistinctAndStable) {
  std::set<std::uint64_t> seeds;
  for (std::size_t r = 0; r < 10; ++r) seeds.insert(run_seed(7, r));
  EXPECT_EQ(seeds.size(), 10u);
  EXPECT_EQ(run_seed(7, 3), run_seed(7, 3));
  EXPECT_NE(run_seed(7, 3), run_seed(8, 3));
}

TEST(Sweep, SmallReportStructure) {
  testing::TempDir dir;
  SynthConfig synth;
  synth.mode = SynthMode::complementary;
  synth.views = {ViewId::from_degrees(0), ViewId::from_degrees(90)};
  synth.scale = 0.2;
  synth.train_subjects = 3;
  synth.val_subjects = 1;
  synth.test_subjects = 1;
  synth.num_classes = 4;
  synth.seed = 2;
  const auto m = synth_generate(synth, dir / "data");
  const auto data = load_dataset<float>(m, synth.views);

  SweepSpec spec;
  spec.runs = 3;
  spec.base_seed = 4;
  spec.pipeline.pretrain = false;
  spec.pipeline.model.frame_sizes = m.view_sizes;
  spec.pipeline.model.num_classes = 4;
  spec.pipeline.model.encoder_sizes = {6, 6, 6};
  spec.pipeline.model.bottleneck_dim = 3;
  spec.pipeline.model.stream_hidden = 3;
  spec.pipeline.model.fusion_hidden = 3;
  spec.pipeline.train.max_epochs = 2;
  const auto report = run_sweep<float>(spec, data, dir / "out");
  write_report(report, dir / "out");

  ASSERT_EQ(report.rows.size(), 3u);
  EXPECT_EQ(report.rows[0].label, "0");
  EXPECT_EQ(report.rows[1].label, "90");
  EXPECT_EQ(report.rows[2].label, "0+90");
  EXPECT_FALSE(report.rows[0].vs_baseline.has_value());
  EXPECT_TRUE(report.rows[2].vs_baseline.has_value());
  for (const auto& row : report.rows) {
    EXPECT_EQ(row.test_accuracy.size(), 3u);
    EXPECT_EQ(row.confusion.total(), data.test.size());
    EXPECT_LE(row.max_by_val, row.stats.max);
  }
  for (const char* f : {"report.txt", "report.tsv", "report.json", "confusion/0+90.csv",
                        "per_subject/0.csv"}) {
    EXPECT_TRUE(std::filesystem::exists(dir / "out" / f)) << f;
  }
  const std::string tsv = format_report_tsv(report);
  EXPECT_EQ(std::count(tsv.begin(), tsv.end(), '\n'), 4);
}

}  // namespace
}  // namespace mvlip
