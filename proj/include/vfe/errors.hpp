#pragma once

#include <stdexcept>
#include <string>

namespace vfe {

/// Precondition violated by the caller (bad shapes, bad ranges, bad config).
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// File system or codec failure. The message carries the underlying cause verbatim.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Checkpoint written by a different format version.
class IncompatibleCheckpoint : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace vfe
