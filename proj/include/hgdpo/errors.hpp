// Copyright 2026 The hgdpo Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace hgdpo {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes incompatible with an operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf produced or consumed, or training diverged.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Bad argument, config value, or missing prerequisite.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// On-disk artifact problems. Subclasses are distinct so callers can tell
// corruption from truncation from an incompatible writer.
class FormatError : public Error {
 public:
  using Error::Error;
};

class CrcError : public FormatError {
 public:
  using FormatError::FormatError;
};

class TruncatedError : public FormatError {
 public:
  using FormatError::FormatError;
};

class VersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

}  // namespace hgdpo
