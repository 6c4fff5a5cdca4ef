// Copyright 2026 The mvlip Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace mvlip {

/// Camera pose of the mouth region, one of 0, 30, 45, 60, 90 degrees.
class ViewId {
 public:
  /// Throws InvalidArgument for angles outside the five poses.
  static ViewId from_degrees(int degrees);
  static bool is_valid(int degrees);
  static const std::array<ViewId, 5>& all();

  int degrees() const noexcept { return degrees_; }
  auto operator<=>(const ViewId&) const = default;

 private:
  explicit constexpr ViewId(int degrees) : degrees_(degrees) {}
  int degrees_;
};

std::string to_string(ViewId view);

struct FrameSize {
  std::size_t height = 0;
  std::size_t width = 0;

  std::size_t pixels() const { return height * width; }
  bool operator==(const FrameSize&) const = default;
};

/// Mouth ROI size per view: 29x50, 29x44, 29x43, 35x44, 44x30.
FrameSize roi_size(ViewId view);

/// Comma- or plus-separated angle list, e.g. "0,90" or "0+45+90".
std::vector<ViewId> parse_views(std::string_view text);

/// Canonical subset label: angles ascending joined by '+'.
std::string subset_label(std::vector<ViewId> views);

/// All 2^n - 1 non-empty subsets, ordered by size then lexicographically.
std::vector<std::vector<ViewId>> nonempty_subsets(std::vector<ViewId> views);

}  // namespace mvlip
