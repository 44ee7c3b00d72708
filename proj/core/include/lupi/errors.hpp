#pragma once

#include <stdexcept>
#include <string>

namespace lupi {

// Error categories map one-to-one onto the CLI exit codes.

/// Bad command-line usage or configuration values.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed, missing or inconsistent input data (JSON, rasters, manifests).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Failure while training (non-finite loss, shape mismatches inside the loop).
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace lupi
