#pragma once

#include <stdexcept>
#include <string>

namespace parkbench {

/// Base of every error thrown by the library. The CLI maps the subclasses
/// onto its exit codes (config 2, data 3, numeric 4).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

/// No Reeds-Shepp word connects the two poses.
class PlanningFailed : public Error {
 public:
  using Error::Error;
};

/// All resampling attempts for a scenario collided or missed the slot.
class ScenarioInfeasible : public Error {
 public:
  using Error::Error;
};

/// A trajectory contains no frame that moves.
class EmptySlice : public DataError {
 public:
  using DataError::DataError;
};

/// Parse failure with the offending line (1-based).
class ParseError : public DataError {
 public:
  ParseError(const std::string& what, std::size_t line)
      : DataError("line " + std::to_string(line) + ": " + what), line_(line) {}
  [[nodiscard]] std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace parkbench
