#pragma once

#include <stdexcept>
#include <string>

namespace sagda {

// Base of every error raised by the library. The CLI maps NumericError to
// exit code 2 and everything else to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A documented precondition was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public ContractError {
 public:
  using ContractError::ContractError;
};

// Input data failed structural validation (graph invariants, config values).
class ValidationError : public Error {
 public:
  using Error::Error;
};

class ParseError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Problem size exceeds what an exhaustive routine supports.
class CapacityError : public ContractError {
 public:
  using ContractError::ContractError;
};

// Non-finite values, divergence, or an iterative method failing to converge.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace sagda
