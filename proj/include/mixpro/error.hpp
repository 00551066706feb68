// Copyright 2026 The MixPro Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace mixpro {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes or image dimensions do not fit together.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A caller broke a documented precondition (non-scalar loss, label rows
/// that are not distributions, repeated backward, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// A distribution or algorithm parameter is out of its valid range.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration: unknown keys, unparsable values, impossible
/// mask/patch geometry.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed file contents. Carries the byte offset where parsing failed.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// File system failures (open/read/write).
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace mixpro
