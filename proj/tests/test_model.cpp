// Copyright 2026 The mvlip Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cstring>

#include "mvlip/checkpoint.hpp"
#include "mvlip/model.hpp"
#include "test_util.hpp"

namespace mvlip {
namespace {

using testing::random_matrix;

const ViewId v0 = ViewId::from_degrees(0);
const ViewId v45 = ViewId::from_degrees(45);
const ViewId v90 = ViewId::from_degrees(90);

ModelConfig toy_config(std::vector<ViewId> views) {
  ModelConfig cfg;
  cfg.views = std::move(views);
  for (ViewId v : cfg.views) cfg.frame_sizes[v] = FrameSize{3, 2 + static_cast<std::size_t>(v.degrees() / 45)};
  cfg.encoder_sizes = {6, 5, 4};
  cfg.bottleneck_dim = 3;
  cfg.stream_hidden = 2;
  cfg.fusion_hidden = 3;
  cfg.num_classes = 4;
  return cfg;
}

template <typename T>
std::map<ViewId, StreamParams<T>> toy_streams(const ModelConfig& cfg, Rng& rng) {
  std::map<ViewId, StreamParams<T>> out;
  for (ViewId v : cfg.views) out.emplace(v, build_stream<T>(cfg, v, std::nullopt, rng));
  return out;
}

template <typename T>
ViewInputs<T> toy_inputs(const ModelConfig& cfg, const std::vector<std::size_t>& lengths, Rng& rng) {
  ViewInputs<T> in;
  for (ViewId v : cfg.views) {
    std::vector<Matrix<T>> seqs;
    for (std::size_t len : lengths) seqs.push_back(random_matrix<T>(len, cfg.input_dim(v), rng));
    in[v] = SequenceBatch<T>::from_sequences(seqs);
  }
  return in;
}

template <typename Model>
bool bitwise_equal(Model& a, Model& b) {
  bool same = true;
  for_each_tensor(
      [&](const std::string&, TensorInfo, const auto& x, const auto& y) {
        if (x.rows() != y.rows() || x.cols() != y.cols() ||
            std::memcmp(x.data(), y.data(), sizeof(*x.data()) * x.size()) != 0) {
          same = false;
        }
      },
      a, b);
  return same;
}

TEST(BuildStream, FrontalDimensions) {
  ModelConfig cfg;
  cfg.views = {v0};
  EXPECT_EQ(cfg.input_dim(v0), 1450u);
  cfg.encoder_sizes = {8, 8, 8};
  Rng rng(1);
  const auto s = build_stream<float>(cfg, v0, std::nullopt, rng);
  EXPECT_EQ(s.encoder.input_size(), 1450u);
  EXPECT_EQ(s.encoder.output_size(), 50u);
  EXPECT_EQ(s.blstm.input_size(), 150u);
  EXPECT_EQ(s.blstm.output_size(), 500u);
  ASSERT_TRUE(s.head.has_value());
  EXPECT_EQ(s.head->output_size(), 10u);
  EXPECT_EQ(parameter_count(s), expected_parameter_count(cfg, v0, true));
}

TEST(BuildStream, GlorotBounds) {
  const auto cfg = toy_config({v0});
  Rng rng(2);
  const auto s = build_stream<double>(cfg, v0, std::nullopt, rng);
  for (const auto& layer : s.encoder.layers) {
    EXPECT_LE(layer.weight.cwiseAbs().maxCoeff(), glorot_bound(layer.input_size(), layer.output_size()));
  }
  // Each gate block is its own H-column glorot matrix.
  const auto& f = s.blstm.forward;
  const std::size_t H = f.hidden_size();
  EXPECT_LE(f.w_input.cwiseAbs().maxCoeff(), glorot_bound(f.input_size(), H));
  EXPECT_LE(f.w_hidden.cwiseAbs().maxCoeff(), glorot_bound(H, H));
}

TEST(BuildMultiview, FusionInputWidth) {
  ModelConfig cfg;
  cfg.views = {v0, v90};
  cfg.encoder_sizes = {4, 4, 4};
  cfg.bottleneck_dim = 2;
  cfg.stream_hidden = 250;
  cfg.fusion_hidden = 3;
  Rng rng(3);
  const auto mv = build_multiview<float>(toy_streams<float>(cfg, rng), cfg, rng);
  EXPECT_EQ(mv.fusion.input_size(), 1000u);
  for (const auto& [view, stream] : mv.streams) EXPECT_FALSE(stream.head.has_value());
  EXPECT_EQ(parameter_count(mv), expected_parameter_count(cfg));
}

TEST(BuildMultiview, SingleViewDegenerateCaseRuns) {
  const auto cfg = toy_config({v0});
  Rng rng(4);
  const auto mv = build_multiview<double>(toy_streams<double>(cfg, rng), cfg, rng);
  const auto out = forward(mv, toy_inputs<double>(cfg, {3, 2}, rng));
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].rows(), 3);
}

TEST(BuildMultiview, MissingStreamIsViewMismatch) {
  const auto cfg = toy_config({v0, v90});
  Rng rng(5);
  auto streams = toy_streams<double>(cfg, rng);
  streams.erase(v90);
  EXPECT_THROW(build_multiview<double>(streams, cfg, rng), ViewMismatch);
}

TEST(Forward, SingleFrameUtterance) {
  const auto cfg = toy_config({v0});
  Rng rng(6);
  const auto s = build_stream<double>(cfg, v0, std::nullopt, rng);
  const auto out = forward(s, toy_inputs<double>(cfg, {1}, rng));
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].rows(), 1);
  EXPECT_NEAR(out[0].sum(), 1.0, 1e-12);
}

TEST(Forward, ZeroModelIsUniform) {
  const auto cfg = toy_config({v0, v45});
  Rng rng(7);
  auto mv = zeros_like(build_multiview<double>(toy_streams<double>(cfg, rng), cfg, rng));
  for (const auto& p : forward(mv, toy_inputs<double>(cfg, {4, 2}, rng))) {
    EXPECT_LE((p.array() - 0.25).abs().maxCoeff(), 1e-15);
  }
}

TEST(Forward, ViewAndLengthContracts) {
  const auto cfg = toy_config({v0, v90});
  Rng rng(8);
  const auto mv = build_multiview<double>(toy_streams<double>(cfg, rng), cfg, rng);
  auto inputs = toy_inputs<double>(cfg, {3, 2}, rng);
  auto only_front = inputs;
  only_front.erase(v90);
  EXPECT_THROW(forward(mv, only_front), ViewMismatch);

  inputs[v90] = SequenceBatch<double>::from_sequences(
      {random_matrix(3, cfg.input_dim(v90), rng), random_matrix(4, cfg.input_dim(v90), rng)});
  EXPECT_THROW(forward(mv, inputs), InvalidArgument);
}

TEST(TensorWalk, ClipScopeFlags) {
  const auto cfg = toy_config({v0});
  Rng rng(9);
  auto s = build_stream<double>(cfg, v0, std::nullopt, rng);
  std::size_t lstm = 0, other = 0;
  for_each_tensor([&](const std::string& name, TensorInfo info, const auto&) {
    (info.lstm ? lstm : other)++;
    EXPECT_EQ(info.lstm, name.find("blstm") != std::string::npos) << name;
  }, s);
  EXPECT_EQ(lstm, 6u);
  EXPECT_EQ(other, 10u);
}

TEST(Checkpoint, StreamRoundTripBitwise) {
  testing::TempDir dir;
  const auto cfg = toy_config({v45});
  Rng rng(10);
  for (int precision = 0; precision < 2; ++precision) {
    if (precision == 0) {
      auto s = build_stream<float>(cfg, v45, std::nullopt, rng);
      save_checkpoint(s, dir / "s.mvlm");
      auto back = load_stream<float>(dir / "s.mvlm");
      EXPECT_TRUE(bitwise_equal(s, back));
      EXPECT_EQ(back.view, v45);
      EXPECT_THROW(load_stream<double>(dir / "s.mvlm"), FormatError);
    } else {
      auto s = build_stream<double>(cfg, v45, std::nullopt, rng);
      save_checkpoint(s, dir / "d.mvlm");
      auto back = load_stream<double>(dir / "d.mvlm");
      EXPECT_TRUE(bitwise_equal(s, back));
    }
  }
}

TEST(Checkpoint, MultiviewRoundTripAndViewMismatch) {
  testing::TempDir dir;
  const auto cfg = toy_config({v0, v45, v90});
  Rng rng(11);
  auto mv = build_multiview<double>(toy_streams<double>(cfg, rng), cfg, rng);
  save_checkpoint(mv, dir / "mv.mvlm");
  auto back = load_multiview<double>(dir / "mv.mvlm");
  EXPECT_TRUE(bitwise_equal(mv, back));

  try {
    load_multiview<double>(dir / "mv.mvlm", std::vector<ViewId>{v0, v90});
    FAIL() << "expected ViewMismatch";
  } catch (const ViewMismatch& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("45"), std::string::npos) << msg;
    EXPECT_NE(msg.find("90"), std::string::npos) << msg;
  }
}

TEST(Checkpoint, MalformedFiles) {
  testing::TempDir dir;
  const auto cfg = toy_config({v0});
  Rng rng(12);
  const auto s = build_stream<float>(cfg, v0, std::nullopt, rng);
  save_checkpoint(s, dir / "ok.mvlm");
  const std::string good = testing::slurp(dir / "ok.mvlm");

  auto code_of = [&](const std::string& bytes) -> std::optional<std::pair<FormatErrc, std::uint64_t>> {
    testing::spit(dir / "bad.mvlm", bytes);
    try {
      read_checkpoint(dir / "bad.mvlm");
    } catch (const FormatError& e) {
      return std::make_pair(e.code(), e.offset());
    }
    return std::nullopt;
  };

  std::string magic = good;
  magic[2] = 'X';
  auto r = code_of(magic);
  ASSERT_TRUE(r);
  EXPECT_EQ(r->first, FormatErrc::bad_magic);
  EXPECT_EQ(r->second, 2u);

  std::string version = good;
  version[4] = 9;
  r = code_of(version);
  ASSERT_TRUE(r);
  EXPECT_EQ(r->first, FormatErrc::unsupported_version);

  r = code_of(good.substr(0, good.size() - 3));
  ASSERT_TRUE(r);
  EXPECT_EQ(r->first, FormatErrc::truncated);

  r = code_of(good + "x");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->first, FormatErrc::malformed);

  EXPECT_THROW(read_checkpoint(dir / "missing.mvlm"), FormatError);
}

}  // namespace
}  // namespace mvlip
