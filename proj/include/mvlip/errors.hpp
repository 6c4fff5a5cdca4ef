// Copyright 2026 The mvlip Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace mvlip {

/// Contract violation by the caller: bad shapes, bad configuration values.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Model and data disagree on the set of views.
class ViewMismatch : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

/// A NaN or infinity appeared in an activation, state or gradient.
class NumericFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Missing or inconsistent dataset content (files, manifest rows).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class FormatErrc {
  bad_magic,
  unsupported_version,
  truncated,
  invalid_view,
  precision_mismatch,
  malformed,
  io,
};

const char* to_string(FormatErrc code);

/// Malformed binary file. `offset` is the byte position where parsing failed.
class FormatError : public std::runtime_error {
 public:
  FormatError(FormatErrc code, std::uint64_t offset, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + " at offset " +
                           std::to_string(offset) + ": " + what),
        code_(code),
        offset_(offset) {}

  FormatErrc code() const noexcept { return code_; }
  std::uint64_t offset() const noexcept { return offset_; }

 private:
  FormatErrc code_;
  std::uint64_t offset_;
};

}  // namespace mvlip
