#pragma once

#include <stdexcept>
#include <string>

namespace terra {

/// Bad caller input: wrong shapes, out-of-range values, malformed files.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A numeric invariant broke at runtime (NaN/Inf, cycles in a flow graph).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Persisted data could not be read back (truncated, corrupted, unknown version).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace terra
