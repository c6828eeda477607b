// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace avalign {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// On-disk format problems: bad magic, unsupported version.
struct FormatError : Error {
  using Error::Error;
};

// File shorter or longer than its header promises.
struct CorruptionError : Error {
  using Error::Error;
};

// Data fails an invariant (non-finite value, bad manifest row, ...).
struct ValidationError : Error {
  using Error::Error;
};

// Operand shapes do not line up.
struct DimensionError : ValidationError {
  using ValidationError::ValidationError;
};

// Bad run configuration (unknown key, invalid hop, ...).
struct ConfigError : Error {
  using Error::Error;
};

// Training could not start or aborted mid-run.
struct TrainingError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

}  // namespace avalign
