#pragma once

#include <stdexcept>
#include <string>

namespace specflow {

// Bad input: malformed config, violated precondition, unsupported roof class.
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A generator or explicit list ran out of partial quotients.
struct DepthError : ValidationError {
  using ValidationError::ValidationError;
};

// The certified error bound is too large to decide a discrete question
// (which side of a jump line, which integer part, ...).
struct PrecisionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace specflow
