#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace tmlp {

/// Base class for all tmlp errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Operand dimensions are incompatible. The message names both shapes.
struct ShapeError : Error {
  using Error::Error;
};

/// A numeric contract was violated (non-finite value, diverged loss, ...).
struct NumericError : Error {
  using Error::Error;
};

/// Run configuration is invalid (unknown key, bad value, missing field).
struct ConfigError : Error {
  using Error::Error;
};

/// Filesystem-level failure (file missing, unreadable, write failed).
struct IoError : Error {
  using Error::Error;
};

/// A serialized container violates the format (magic, version, layout).
struct FormatError : Error {
  using Error::Error;
};

/// A container chunk is present but fails its checksum.
struct IntegrityError : Error {
  IntegrityError(const std::string& msg, std::uint32_t layer)
      : Error(msg), layer_index(layer) {}
  std::uint32_t layer_index;
};

/// Training aborted; carries the step at which it happened.
struct TrainError : Error {
  TrainError(const std::string& msg, long at_step) : Error(msg), step(at_step) {}
  long step;
};

}  // namespace tmlp
