// Copyright 2026 The mvlip Authors
// SPDX-License-Identifier: Apache-2.0

#include "mvlip/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <boost/math/distributions/students_t.hpp>

namespace mvlip {

std::size_t majority_vote(std::span<const std::size_t> frame_labels) {
  if (frame_labels.empty()) throw InvalidArgument("majority_vote: empty label sequence");
  const std::size_t top = *std::max_element(frame_labels.begin(), frame_labels.end());
  std::vector<std::size_t> counts(top + 1, 0);
  for (const std::size_t l : frame_labels) ++counts[l];
  return static_cast<std::size_t>(std::max_element(counts.begin(), counts.end()) - counts.begin());
}

template <typename T>
std::size_t decode_utterance(const Matrix<T>& frame_scores) {
  std::vector<std::size_t> labels(frame_scores.rows());
  for (Eigen::Index r = 0; r < frame_scores.rows(); ++r) {
    Eigen::Index best = 0;
    frame_scores.row(r).maxCoeff(&best);
    labels[r] = static_cast<std::size_t>(best);
  }
  return majority_vote(labels);
}

template std::size_t decode_utterance<float>(const Matrix<float>&);
template std::size_t decode_utterance<double>(const Matrix<double>&);

double utterance_accuracy(std::span<const std::size_t> predictions,
                          std::span<const std::size_t> labels) {
  if (predictions.size() != labels.size()) {
    throw InvalidArgument("utterance_accuracy: " + std::to_string(predictions.size()) +
                          " predictions for " + std::to_string(labels.size()) + " labels");
  }
  if (labels.empty()) throw InvalidArgument("utterance_accuracy: no utterances");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) correct += predictions[i] == labels[i];
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

std::size_t& ConfusionMatrix::at(std::size_t truth, std::size_t predicted) {
  if (truth >= classes_ || predicted >= classes_) {
    throw InvalidArgument("confusion matrix index out of range");
  }
  return counts_[truth * classes_ + predicted];
}

std::size_t ConfusionMatrix::at(std::size_t truth, std::size_t predicted) const {
  return const_cast<ConfusionMatrix*>(this)->at(truth, predicted);
}

std::size_t ConfusionMatrix::row_sum(std::size_t truth) const {
  std::size_t s = 0;
  for (std::size_t p = 0; p < classes_; ++p) s += at(truth, p);
  return s;
}

std::size_t ConfusionMatrix::trace() const {
  std::size_t s = 0;
  for (std::size_t c = 0; c < classes_; ++c) s += at(c, c);
  return s;
}

std::size_t ConfusionMatrix::total() const {
  return std::accumulate(counts_.begin(), counts_.end(), std::size_t{0});
}

ConfusionMatrix confusion_matrix(std::span<const std::size_t> predictions,
                                 std::span<const std::size_t> labels, std::size_t classes) {
  if (predictions.size() != labels.size()) {
    throw InvalidArgument("confusion_matrix: length mismatch");
  }
  ConfusionMatrix m(classes);
  for (std::size_t i = 0; i < labels.size(); ++i) ++m.at(labels[i], predictions[i]);
  return m;
}

RunStats run_stats(std::span<const double> values) {
  if (values.empty()) throw InvalidArgument("run_stats: no runs");
  RunStats s;
  s.count = values.size();
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(s.count);
  s.max = *std::max_element(values.begin(), values.end());
  if (s.count >= 2) {
    double ss = 0.0;
    for (const double v : values) ss += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(ss / static_cast<double>(s.count - 1));
  }
  return s;
}

std::map<std::uint32_t, RunStats> per_subject_accuracy(const std::vector<Predictions>& runs) {
  if (runs.empty()) throw InvalidArgument("per_subject_accuracy: no runs");
  std::map<std::uint32_t, std::vector<double>> per_subject;
  for (const Predictions& run : runs) {
    if (run.subjects.size() != run.labels.size() || run.labels.size() != run.predicted.size()) {
      throw InvalidArgument("per_subject_accuracy: inconsistent prediction record");
    }
    std::map<std::uint32_t, std::pair<std::size_t, std::size_t>> tally;  // correct, total
    for (std::size_t i = 0; i < run.labels.size(); ++i) {
      auto& [correct, total] = tally[run.subjects[i]];
      correct += run.labels[i] == run.predicted[i];
      ++total;
    }
    for (const auto& [subject, ct] : tally) {
      per_subject[subject].push_back(static_cast<double>(ct.first) /
                                     static_cast<double>(ct.second));
    }
  }
  std::map<std::uint32_t, RunStats> out;
  for (const auto& [subject, accs] : per_subject) out.emplace(subject, run_stats(accs));
  return out;
}

namespace {

double sample_variance(std::span<const double> x, double mean) {
  double ss = 0.0;
  for (const double v : x) ss += (v - mean) * (v - mean);
  return ss / static_cast<double>(x.size() - 1);
}

}  // namespace

SignificanceResult significance_test(std::span<const double> a, std::span<const double> b,
                                     double alpha) {
  if (a.size() < 3 || b.size() < 3) {
    throw InvalidArgument("significance_test: need at least 3 runs per sample");
  }
  SignificanceResult r;
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / na;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / nb;
  const double qa = sample_variance(a, ma) / na;
  const double qb = sample_variance(b, mb) / nb;
  const double se2 = qa + qb;
  if (se2 > 0.0) {
    r.welch_t = (ma - mb) / std::sqrt(se2);
    r.welch_df = se2 * se2 / (qa * qa / (na - 1.0) + qb * qb / (nb - 1.0));
    const boost::math::students_t dist(r.welch_df);
    r.welch_p = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(r.welch_t))));
  } else {
    r.welch_df = na + nb - 2.0;
    if (ma == mb) {
      r.welch_t = 0.0;
      r.welch_p = 1.0;
    } else {
      r.welch_t = ma > mb ? std::numeric_limits<double>::infinity()
                          : -std::numeric_limits<double>::infinity();
      r.welch_p = 0.0;
    }
  }

  // Mann-Whitney U with mid-ranks.
  std::vector<std::pair<double, int>> pooled;
  for (const double v : a) pooled.emplace_back(v, 0);
  for (const double v : b) pooled.emplace_back(v, 1);
  std::sort(pooled.begin(), pooled.end());
  const double n = na + nb;
  double rank_sum_a = 0.0;
  double tie_term = 0.0;
  for (std::size_t i = 0; i < pooled.size();) {
    std::size_t j = i;
    while (j < pooled.size() && pooled[j].first == pooled[i].first) ++j;
    const double mid_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    const double t = static_cast<double>(j - i);
    tie_term += t * t * t - t;
    for (std::size_t k = i; k < j; ++k) {
      if (pooled[k].second == 0) rank_sum_a += mid_rank;
    }
    i = j;
  }
  r.mann_whitney_u = rank_sum_a - na * (na + 1.0) / 2.0;
  const double var_u = na * nb / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
  if (var_u > 0.0) {
    const double z =
        std::max(0.0, std::abs(r.mann_whitney_u - na * nb / 2.0) - 0.5) / std::sqrt(var_u);
    r.mann_whitney_p = std::min(1.0, std::erfc(z / std::sqrt(2.0)));
  }
  r.significant = r.welch_p < alpha;
  return r;
}

}  // namespace mvlip
