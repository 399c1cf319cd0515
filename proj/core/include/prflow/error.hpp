#pragma once

#include <stdexcept>
#include <string>

namespace prflow {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller broke an operation's precondition (shape mismatch, bad argument).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// A forward or backward pass produced NaN/Inf.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Malformed IDX, checkpoint or configuration input.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// An image with no observed pixel was handed to an operation that needs one.
class EmptySampleError : public ContractError {
 public:
  using ContractError::ContractError;
};

}  // namespace prflow
