// Copyright Contributors to the nerfsup project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace nerfsup {

// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Pixel outside the image it is supposed to address.
class InvalidPixelError : public Error {
 public:
  using Error::Error;
};

// Argument outside the mathematical domain of an operation (nonpositive depth,
// non-unit direction, non-orthonormal rotation, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Inconsistent or out-of-range configuration values.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Dataset content that cannot be used (size mismatches, too few images, ...).
class DatasetError : public Error {
 public:
  using Error::Error;
};

// File could not be read, parsed or validated. The message names the file or
// the offending entry.
class LoadError : public Error {
 public:
  using Error::Error;
};

}  // namespace nerfsup
