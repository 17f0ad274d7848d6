// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace mhnf {

/// Operand shapes do not fit the operation.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A computation produced NaN/Inf or an otherwise unusable number.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent dataset content. The message carries file:line.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Training aborted (divergence, invalid configuration).
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Checkpoint cannot be read or does not match the data it is used with.
class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mhnf
