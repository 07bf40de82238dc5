#pragma once

#include <stdexcept>
#include <string>

namespace stairnet {

/// Tensor shapes or spatial sizes that cannot be combined.
class DimensionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration value or unknown key.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operation invoked in the wrong state (e.g. backward before forward).
class StateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed text or binary input. Messages carry the line number or offset.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Filesystem failure; the message carries the path.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Degenerate box passed to the target encoder.
class EncodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite gradient or loss during training.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace stairnet
