#pragma once

#include <stdexcept>
#include <string>

namespace dposim {

/// Base class for all engine errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Invalid configuration value; the message names the offending field.
struct ConfigError : Error {
  using Error::Error;
};

/// Unknown instruction or response id.
struct LookupError : Error {
  using Error::Error;
};

/// A pair operation received twice the same response.
struct PairError : Error {
  using Error::Error;
};

/// Structurally incompatible inputs (mismatched pools, shapes).
struct StructureError : Error {
  using Error::Error;
};

/// Training cannot proceed (empty data, frozen target).
struct TrainError : Error {
  using Error::Error;
};

/// Non-finite value encountered; message carries diagnostics.
struct NumericError : Error {
  using Error::Error;
};

/// A metric is undefined for the given inputs.
struct MetricError : Error {
  using Error::Error;
};

/// Malformed input file; carries a line number when known.
struct ParseError : Error {
  explicit ParseError(const std::string& msg, long line = -1)
      : Error(line >= 0 ? "line " + std::to_string(line) + ": " + msg : msg),
        line_number(line) {}
  long line_number;
};

}  // namespace dposim
