// Copyright 2026 The mvlip Authors
// SPDX-License-Identifier: Apache-2.0

// Checkpoint file layout (all integers little-endian):
//
//   "MVLM"                       4 bytes magic
//   version                      u32, currently 1
//   tensor count                 u32
//   per tensor:
//     name length                u32
//     name                       UTF-8 bytes, no terminator
//     rank                       u32 (0, 1 or 2)
//     dims                       rank x u32, row-major order
//     precision                  u8, 1 = float32, 2 = float64
//     values                     product(dims) raw IEEE values
//
// Tensor names:
//   view/<angle>/encoder/<k>/{weight,bias}
//   view/<angle>/blstm/{forward,backward}/{w_input,w_hidden,bias}
//   view/<angle>/head/{weight,bias}            standalone stream only
//   fusion/blstm/{forward,backward}/{w_input,w_hidden,bias}
//   head/{weight,bias}                         multi-view only
//   meta/view/<angle>/delta_window             rank 0
// LSTM gate blocks are packed side by side in the order input, forget,
// output, candidate.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mvlip/model.hpp"

namespace mvlip {

inline constexpr char kCheckpointMagic[4] = {'M', 'V', 'L', 'M'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class ModelKind { encoder, stream, multiview };

struct TensorRecord {
  std::string name;
  std::vector<std::uint32_t> dims;
  Precision precision = Precision::f32;
  std::vector<double> values;  // widened; float32 values round-trip exactly
};

struct Checkpoint {
  std::vector<TensorRecord> tensors;

  ModelKind kind() const;
  Precision precision() const;
  std::vector<ViewId> views() const;
  const TensorRecord* find(const std::string& name) const;
};

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
/// Throws FormatError with bad_magic, unsupported_version or truncated.
Checkpoint read_checkpoint(const std::filesystem::path& path);

template <typename T>
Checkpoint to_checkpoint(const StreamParams<T>& model);
template <typename T>
Checkpoint to_checkpoint(const MultiViewParams<T>& model);
template <typename T>
Checkpoint to_checkpoint(const EncoderParams<T>& encoder, ViewId view);

template <typename T>
StreamParams<T> stream_from_checkpoint(const Checkpoint& ckpt);
template <typename T>
MultiViewParams<T> multiview_from_checkpoint(const Checkpoint& ckpt);
template <typename T>
EncoderParams<T> encoder_from_checkpoint(const Checkpoint& ckpt, ViewId view);

template <typename Model>
void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  write_checkpoint(to_checkpoint(model), path);
}

template <typename T>
void save_checkpoint(const EncoderParams<T>& encoder, ViewId view,
                     const std::filesystem::path& path) {
  write_checkpoint(to_checkpoint(encoder, view), path);
}

template <typename T>
StreamParams<T> load_stream(const std::filesystem::path& path) {
  return stream_from_checkpoint<T>(read_checkpoint(path));
}

/// With `expected_views`, throws ViewMismatch when the stored views differ.
template <typename T>
MultiViewParams<T> load_multiview(const std::filesystem::path& path,
                                  const std::optional<std::vector<ViewId>>& expected_views = {});

template <typename T>
EncoderParams<T> load_encoder(const std::filesystem::path& path, ViewId view) {
  return encoder_from_checkpoint<T>(read_checkpoint(path), view);
}

}  // namespace mvlip
