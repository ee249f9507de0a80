// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace cellgrade {

// Base of every error raised by the library. The CLI maps each family to an
// exit code: ConfigError -> 2, DataError -> 3, IntegrityError -> 4.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad parameters, impossible shapes, too-small folds.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

// Problems with the input data: layout, decoding, empty corpora.
class DataError : public Error {
 public:
  using Error::Error;
};

class DecodeError : public DataError {
 public:
  using DataError::DataError;
};

class UnsupportedFormatError : public DecodeError {
 public:
  using DecodeError::DecodeError;
};

// Checkpoint corruption: bad magic, version, digest or checksum.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

}  // namespace cellgrade
