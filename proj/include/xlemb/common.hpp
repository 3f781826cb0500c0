#pragma once

#include <stdexcept>
#include <string>

namespace xlemb {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Dimension/shape contract violations (mismatched operands, bad ranks).
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Invalid data fed to an operation: misaligned corpora, bad token ids,
// degenerate masks, out-of-range values.
class DataError : public Error {
 public:
  using Error::Error;
};

// File-format problems: bad magic, checksum mismatch, truncation.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Configuration/schema violations.
class ConfigError : public DataError {
 public:
  using DataError::DataError;
};

// Numeric failures: non-finite values, failed gradient checks, tape misuse.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace xlemb
