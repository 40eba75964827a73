#pragma once

#include <stdexcept>
#include <string>

namespace sert {

/// Shape or extent disagreement between operands.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Invalid model/operator configuration (odd channel count, head mismatch, ...).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Out-of-range user parameter (negative sigma, inverted range, ...).
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Non-finite values where finite ones are required.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// API misuse such as backward on an empty or consumed tape.
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Broken internal contract (e.g. unpadded input reaching a partition).
class InternalError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Malformed file contents.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Checkpoint config disagrees with the runtime config.
class ConfigConflictError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// Checkpoint blob shape disagrees with the model parameter shape.
class ShapeConflictError : public FormatError {
 public:
  using FormatError::FormatError;
};

}  // namespace sert
