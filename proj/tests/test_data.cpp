// Copyright 2026 The mvlip Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <set>

#include "mvlip/data.hpp"
#include "mvlip/errors.hpp"
#include "mvlip/synth.hpp"
#include "test_util.hpp"

namespace mvlip {
namespace {

using testing::slurp;
using testing::spit;
using testing::TempDir;

const ViewId v0 = ViewId::from_degrees(0);
const ViewId v90 = ViewId::from_degrees(90);

Utterance sample_utterance(std::size_t frames = 3) {
  Utterance u;
  u.subject = 41;
  u.label = 7;
  u.view = ViewId::from_degrees(60);
  u.take = 2;
  u.size = FrameSize{3, 4};
  Rng rng(1);
  u.frames = testing::random_matrix<float>(frames, 12, rng);
  return u;
}

FormatError read_error(const std::filesystem::path& path) {
  try {
    read_utterance(path);
  } catch (const FormatError& e) {
    return e;
  }
  ADD_FAILURE() << "no FormatError for " << path;
  return FormatError(FormatErrc::io, 0, "");
}

TEST(Utterance, RoundTripBitwise) {
  TempDir dir;
  const Utterance u = sample_utterance();
  write_utterance(u, dir / "u.mvlu");
  const Utterance back = read_utterance(dir / "u.mvlu");
  EXPECT_EQ(back.subject, u.subject);
  EXPECT_EQ(back.label, u.label);
  EXPECT_EQ(back.view, u.view);
  EXPECT_EQ(back.take, u.take);
  EXPECT_EQ(back.size, u.size);
  ASSERT_EQ(back.frames.size(), u.frames.size());
  EXPECT_EQ(std::memcmp(back.frames.data(), u.frames.data(), sizeof(float) * u.frames.size()), 0);
  write_utterance(back, dir / "again.mvlu");
  EXPECT_EQ(slurp(dir / "u.mvlu"), slurp(dir / "again.mvlu"));
  EXPECT_EQ(slurp(dir / "u.mvlu").size(), kUtteranceHeaderBytes + 3 * 12 * 4);
}

TEST(Utterance, MalformedFiles) {
  TempDir dir;
  write_utterance(sample_utterance(), dir / "u.mvlu");
  const std::string good = slurp(dir / "u.mvlu");

  std::string bytes = good;
  bytes[1] = 'Q';
  spit(dir / "b.mvlu", bytes);
  auto e = read_error(dir / "b.mvlu");
  EXPECT_EQ(e.code(), FormatErrc::bad_magic);
  EXPECT_EQ(e.offset(), 1u);

  bytes = good;
  bytes[4] = 2;
  spit(dir / "b.mvlu", bytes);
  EXPECT_EQ(read_error(dir / "b.mvlu").code(), FormatErrc::unsupported_version);

  bytes = good;
  bytes[12] = 17;
  bytes[13] = 0;
  spit(dir / "b.mvlu", bytes);
  e = read_error(dir / "b.mvlu");
  EXPECT_EQ(e.code(), FormatErrc::invalid_view);
  EXPECT_NE(std::string(e.what()).find("17"), std::string::npos) << e.what();

  spit(dir / "b.mvlu", good.substr(0, good.size() - 10));
  e = read_error(dir / "b.mvlu");
  EXPECT_EQ(e.code(), FormatErrc::truncated);
  const std::string msg = e.what();
  EXPECT_NE(msg.find(std::to_string(good.size())), std::string::npos) << msg;
  EXPECT_NE(msg.find(std::to_string(good.size() - 10)), std::string::npos) << msg;

  spit(dir / "b.mvlu", good.substr(0, 10));
  EXPECT_EQ(read_error(dir / "b.mvlu").code(), FormatErrc::truncated);

  spit(dir / "b.mvlu", good + "zz");
  EXPECT_EQ(read_error(dir / "b.mvlu").code(), FormatErrc::malformed);

  EXPECT_EQ(read_error(dir / "nothing.mvlu").code(), FormatErrc::io);
}

TEST(Preprocess, TwoFrameExample) {
  Utterance u;
  u.size = FrameSize{2, 2};
  u.frames.resize(2, 4);
  u.frames << 1, 2, 3, 4,
              3, 2, 1, 0;
  const MatrixD z = preprocess<double>(u);
  // A - (A+B)/2 = [-1, 0, 1, 2]: mean 0.5, population variance 1.25.
  const double sd = std::sqrt(1.25);
  const double want[4] = {-1.5 / sd, -0.5 / sd, 0.5 / sd, 1.5 / sd};
  for (int j = 0; j < 4; ++j) {
    EXPECT_NEAR(z(0, j), want[j], 1e-12);
    EXPECT_NEAR(z(1, j), -want[j], 1e-12);
  }
}

TEST(Preprocess, ConstantVideoIsZero) {
  Utterance u;
  u.size = FrameSize{2, 3};
  u.frames = MatrixF::Constant(4, 6, 0.7f);
  const MatrixD z = preprocess<double>(u);
  EXPECT_TRUE(z.allFinite());
  EXPECT_TRUE(z.isZero(0));
}

TEST(Preprocess, FramesAreStandardised) {
  Utterance u = sample_utterance(5);
  const MatrixD z = preprocess<double>(u);
  for (Eigen::Index t = 0; t < z.rows(); ++t) {
    EXPECT_NEAR(z.row(t).mean(), 0.0, 1e-12);
    EXPECT_NEAR(z.row(t).squaredNorm() / 12.0, 1.0, 1e-9);
  }
}

DatasetManifest protocol_manifest(std::size_t subjects) {
  DatasetManifest m;
  m.view_sizes[v0] = FrameSize{29, 50};
  for (std::uint32_t s = 1; s <= subjects; ++s) {
    for (std::uint16_t c = 0; c < 10; ++c) {
      for (std::uint16_t t = 1; t <= 3; ++t) {
        m.entries.push_back({"s" + std::to_string(s) + "_" + std::to_string(c) + "_" + std::to_string(t),
                             s, c, v0, t, Split::unassigned});
      }
    }
  }
  return m;
}

TEST(Split, ProtocolCounts) {
  const auto m = split_subjects(protocol_manifest(52), 35, 5, 12, 7);
  EXPECT_EQ(m.count(Split::train), 1050u);
  EXPECT_EQ(m.count(Split::val), 150u);
  EXPECT_EQ(m.count(Split::test), 360u);
  EXPECT_EQ(m.subjects(Split::test).size(), 12u);
  EXPECT_NO_THROW(m.validate());
}

TEST(Split, SeedDeterminesAssignment) {
  const auto base = protocol_manifest(52);
  const auto a = split_subjects(base, 35, 5, 12, 11);
  const auto b = split_subjects(base, 35, 5, 12, 11);
  const auto c = split_subjects(base, 35, 5, 12, 12);
  EXPECT_EQ(a.subjects(Split::test), b.subjects(Split::test));
  EXPECT_EQ(a.subjects(Split::val), b.subjects(Split::val));
  EXPECT_NE(a.subjects(Split::test), c.subjects(Split::test));
}

TEST(Split, PreassignedTestSubjectsKept) {
  auto base = protocol_manifest(52);
  for (auto& e : base.entries) {
    if (e.subject > 40) e.split = Split::test;
  }
  const auto m = split_subjects(base, 35, 5, 12, 3);
  const std::vector<std::uint32_t> want{41, 42, 43, 44, 45, 46, 47, 48, 49, 50, 51, 52};
  EXPECT_EQ(m.subjects(Split::test), want);
  EXPECT_EQ(m.count(Split::train), 1050u);
}

TEST(Split, TooFewSubjects) {
  EXPECT_THROW(split_subjects(protocol_manifest(10), 35, 5, 12, 0), InvalidArgument);
}

TEST(Manifest, RoundTripAndValidation) {
  TempDir dir;
  auto m = split_subjects(protocol_manifest(52), 35, 5, 12, 1);
  m.num_classes = 10;
  m.view_sizes[v90] = FrameSize{44, 30};
  m.oracle_accuracies.emplace_back("view:0", 0.5);
  write_manifest(m, dir / "m.tsv");
  const auto back = read_manifest(dir / "m.tsv");
  EXPECT_EQ(back.view_sizes, m.view_sizes);
  EXPECT_EQ(back.oracle("view:0"), 0.5);
  ASSERT_EQ(back.entries.size(), m.entries.size());
  for (std::size_t i = 0; i < m.entries.size(); ++i) {
    EXPECT_EQ(back.entries[i].path, m.entries[i].path);
    EXPECT_EQ(back.entries[i].split, m.entries[i].split);
  }
  write_manifest(back, dir / "again.tsv");
  EXPECT_EQ(slurp(dir / "m.tsv"), slurp(dir / "again.tsv"));

  auto dup = m;
  dup.entries.push_back(dup.entries.front());
  EXPECT_THROW(dup.validate(), DataError);
  auto leak = m;
  leak.entries.front().split = leak.entries.front().split == Split::test ? Split::train : Split::test;
  EXPECT_THROW(leak.validate(), DataError);
  auto label = m;
  label.entries.front().label = 10;
  EXPECT_THROW(label.validate(), DataError);
}

SynthConfig tiny_synth() {
  SynthConfig cfg;
  cfg.scale = 0.25;
  cfg.train_subjects = 3;
  cfg.val_subjects = 1;
  cfg.test_subjects = 2;
  cfg.num_classes = 4;
  cfg.seed = 21;
  return cfg;
}

TEST(Synth, NoiselessSeparableOracleIsPerfect) {
  TempDir dir;
  auto cfg = tiny_synth();
  cfg.noise = 0.0;
  const auto m = synth_generate(cfg, dir.path());
  EXPECT_EQ(m.oracle("view:0"), 1.0);
  EXPECT_EQ(template_oracle(m).per_view.at(v0), 1.0);
}

TEST(Synth, SameSeedSameBytes) {
  TempDir a, b;
  auto cfg = tiny_synth();
  cfg.views = {v0, v90};
  cfg.mode = SynthMode::complementary;
  const auto ma = synth_generate(cfg, a.path());
  synth_generate(cfg, b.path());
  EXPECT_EQ(slurp(a / "manifest.tsv"), slurp(b / "manifest.tsv"));
  for (const auto& e : ma.entries) {
    ASSERT_EQ(slurp(a / e.path), slurp(b / e.path)) << e.path;
  }
  EXPECT_EQ(ma.count(Split::test), 2u * 4 * 3 * 2);
}

TEST(Synth, ComplementaryPatternsNeedBothChannels) {
  SynthConfig cfg;
  cfg.mode = SynthMode::complementary;
  std::set<std::pair<std::size_t, std::size_t>> pairs;
  std::map<std::size_t, std::set<std::size_t>> by_first;
  for (std::size_t c = 0; c < cfg.num_classes; ++c) {
    const auto p = class_patterns(cfg, c);
    pairs.insert(p);
    by_first[p.first].insert(c);
  }
  EXPECT_EQ(pairs.size(), cfg.num_classes);
  for (const auto& [first, classes] : by_first) EXPECT_GE(classes.size(), 2u);
}

TEST(LoadDataset, MissingFileNamesRow) {
  TempDir dir;
  const auto m = synth_generate(tiny_synth(), dir.path());
  std::filesystem::remove(dir / m.entries[5].path);
  try {
    load_dataset<float>(m, {v0});
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("manifest row 6"), std::string::npos) << msg;
    EXPECT_NE(msg.find(m.entries[5].path), std::string::npos) << msg;
  }
}

TEST(LoadDataset, GroupsSplits) {
  TempDir dir;
  const auto m = synth_generate(tiny_synth(), dir.path());
  const auto d = load_dataset<float>(m, {v0});
  EXPECT_EQ(d.train.size(), 3u * 4 * 3);
  EXPECT_EQ(d.val.size(), 1u * 4 * 3);
  EXPECT_EQ(d.test.size(), 2u * 4 * 3);
  EXPECT_THROW(load_dataset<float>(m, {v90}), DataError);
}

}  // namespace
}  // namespace mvlip
