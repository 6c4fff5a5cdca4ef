// Copyright 2026 The mvlip Authors
// SPDX-License-Identifier: Apache-2.0

// Utterance files ("MVLU", little-endian):
//
//   offset  size  field
//        0     4  magic "MVLU"
//        4     2  version (u16, currently 1)
//        6     4  subject (u32)
//       10     2  label (u16)
//       12     2  view angle in degrees (u16; 0, 30, 45, 60 or 90)
//       14     2  take (u16)
//       16     4  frame count T (u32)
//       20     2  height H (u16)
//       22     2  width W (u16)
//       24         T*H*W float32 pixels, frame-major then row-major
//
// Manifest files are tab-separated text:
//
//   # mvlip manifest v1
//   #classes <n>
//   #view <angle> <height> <width>          one line per view
//   #oracle <name> <accuracy>               optional, written by the generator
//   path subject label view take split      column header
//   <one row per utterance file>            split is train, val, test or -
//
// Paths are relative to the manifest's directory.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mvlip/ndcore.hpp"
#include "mvlip/view.hpp"

namespace mvlip {

inline constexpr char kUtteranceMagic[4] = {'M', 'V', 'L', 'U'};
inline constexpr std::uint16_t kUtteranceVersion = 1;
inline constexpr std::size_t kUtteranceHeaderBytes = 24;

struct Utterance {
  std::uint32_t subject = 0;
  std::uint16_t label = 0;
  ViewId view = ViewId::from_degrees(0);
  std::uint16_t take = 0;
  FrameSize size;
  MatrixF frames;  // T x (H * W)

  std::size_t length() const { return static_cast<std::size_t>(frames.rows()); }
};

void write_utterance(const Utterance& utt, const std::filesystem::path& path);
/// Throws FormatError: bad_magic, unsupported_version, invalid_view, truncated.
Utterance read_utterance(const std::filesystem::path& path);

enum class Split { unassigned, train, val, test };

std::string to_string(Split split);
Split parse_split(const std::string& text);

struct ManifestEntry {
  std::string path;
  std::uint32_t subject = 0;
  std::uint16_t label = 0;
  ViewId view = ViewId::from_degrees(0);
  std::uint16_t take = 0;
  Split split = Split::unassigned;
};

struct DatasetManifest {
  std::size_t num_classes = 10;
  std::map<ViewId, FrameSize> view_sizes;
  std::vector<std::pair<std::string, double>> oracle_accuracies;
  std::vector<ManifestEntry> entries;
  std::filesystem::path root;  // directory that entry paths are relative to

  std::vector<std::uint32_t> subjects() const;
  std::vector<std::uint32_t> subjects(Split split) const;
  std::vector<ViewId> views() const;
  /// Entries of `split`, optionally restricted to one view.
  std::size_t count(Split split) const;
  std::size_t count(Split split, ViewId view) const;
  std::optional<double> oracle(const std::string& name) const;

  /// Subject-disjoint splits, unique (subject, label, take) per view, declared
  /// sizes for every used view, labels below num_classes.
  void validate() const;
};

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
DatasetManifest read_manifest(const std::filesystem::path& path);

/// Subtracts the utterance's mean image from every frame, then z-normalises
/// each frame vector (population statistics, standard deviation floored at
/// 1e-8).
template <typename T>
Matrix<T> preprocess(const Utterance& utt);

inline constexpr double kStddevFloor = 1e-8;

/// Assigns train/val/test by subject. Subjects already marked test in the
/// manifest stay the test set; otherwise n_test subjects are drawn. Subjects
/// beyond n_train + n_val + n_test join the training split.
DatasetManifest split_subjects(const DatasetManifest& manifest, std::size_t n_train = 35,
                               std::size_t n_val = 5, std::size_t n_test = 12,
                               std::uint64_t seed = 0);

/// One utterance seen from every requested view, preprocessed.
template <typename T>
struct Example {
  std::map<ViewId, Matrix<T>> views;
  std::size_t label = 0;
  std::uint32_t subject = 0;
  std::uint16_t take = 0;

  std::size_t length() const { return static_cast<std::size_t>(views.begin()->second.rows()); }
};

template <typename T>
struct DatasetSplits {
  std::vector<Example<T>> train;
  std::vector<Example<T>> val;
  std::vector<Example<T>> test;
  std::size_t num_classes = 10;
  std::map<ViewId, FrameSize> view_sizes;
};

/// Reads and preprocesses every assigned entry for `views`. Throws DataError
/// naming the manifest row for missing files or metadata disagreements.
template <typename T>
DatasetSplits<T> load_dataset(const DatasetManifest& manifest, const std::vector<ViewId>& views);

}  // namespace mvlip
