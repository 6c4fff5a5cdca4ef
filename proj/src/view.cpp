// Copyright 2026 The mvlip Authors
// SPDX-License-Identifier: Apache-2.0

#include "mvlip/view.hpp"

#include <algorithm>
#include <charconv>

#include "mvlip/errors.hpp"

namespace mvlip {

bool ViewId::is_valid(int degrees) {
  return degrees == 0 || degrees == 30 || degrees == 45 || degrees == 60 || degrees == 90;
}

ViewId ViewId::from_degrees(int degrees) {
  if (!is_valid(degrees)) {
    throw InvalidArgument("invalid view angle " + std::to_string(degrees) +
                          " (expected one of 0, 30, 45, 60, 90)");
  }
  return ViewId(degrees);
}

const std::array<ViewId, 5>& ViewId::all() {
  static const std::array<ViewId, 5> views{ViewId(0), ViewId(30), ViewId(45), ViewId(60),
                                           ViewId(90)};
  return views;
}

std::string to_string(ViewId view) { return std::to_string(view.degrees()); }

FrameSize roi_size(ViewId view) {
  switch (view.degrees()) {
    case 0: return {29, 50};
    case 30: return {29, 44};
    case 45: return {29, 43};
    case 60: return {35, 44};
    default: return {44, 30};
  }
}

std::vector<ViewId> parse_views(std::string_view text) {
  std::vector<ViewId> views;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find_first_of(",+ ", pos);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view token = text.substr(pos, end - pos);
    if (!token.empty()) {
      int degrees = 0;
      const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), degrees);
      if (ec != std::errc() || ptr != token.data() + token.size()) {
        throw InvalidArgument("cannot parse view '" + std::string(token) + "'");
      }
      const ViewId view = ViewId::from_degrees(degrees);
      if (std::find(views.begin(), views.end(), view) != views.end()) {
        throw InvalidArgument("duplicate view " + std::string(token));
      }
      views.push_back(view);
    }
    pos = end + 1;
  }
  if (views.empty()) throw InvalidArgument("empty view list");
  return views;
}

std::string subset_label(std::vector<ViewId> views) {
  std::sort(views.begin(), views.end());
  std::string label;
  for (const ViewId v : views) {
    if (!label.empty()) label += '+';
    label += to_string(v);
  }
  return label;
}

std::vector<std::vector<ViewId>> nonempty_subsets(std::vector<ViewId> views) {
  std::sort(views.begin(), views.end());
  const std::size_t n = views.size();
  std::vector<std::vector<ViewId>> subsets;
  for (std::size_t mask = 1; mask < (std::size_t{1} << n); ++mask) {
    std::vector<ViewId> subset;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask & (std::size_t{1} << i)) subset.push_back(views[i]);
    }
    subsets.push_back(std::move(subset));
  }
  std::stable_sort(subsets.begin(), subsets.end(), [](const auto& a, const auto& b) {
    if (a.size() != b.size()) return a.size() < b.size();
    return a < b;
  });
  return subsets;
}

}  // namespace mvlip
