#pragma once

#include <stdexcept>
#include <string>

namespace msfsim {

// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite values fed into a numeric operation.
struct NumericError : Error {
  using Error::Error;
};

// Singular or badly conditioned linear-algebra input (e.g. innovation covariance).
struct LinAlgError : Error {
  using Error::Error;
};

// An argument outside the operation's contract.
struct ArgumentError : Error {
  using Error::Error;
};

// Structured input (trace, config, period list) failed validation.
struct ValidationError : Error {
  using Error::Error;
};

// Statistical input with no information content (zero variance, zero margin).
struct DegenerateInputError : Error {
  using Error::Error;
};

// A callback broke its contract.
struct ContractViolationError : Error {
  using Error::Error;
};

// Malformed serialized data; carries the 1-based line number.
struct ParseError : Error {
  ParseError(const std::string& msg, std::size_t line)
      : Error(msg + " (line " + std::to_string(line) + ")"), line_number(line) {}
  std::size_t line_number;
};

}  // namespace msfsim
