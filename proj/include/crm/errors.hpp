#pragma once

#include <stdexcept>
#include <string>

namespace crm {

/// Non-finite evaluation of a hazard quantity (overflow, invalid arguments).
class EvaluationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Violated precondition or inapplicable request (wrong dimensions, bad schedule).
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed or insufficient input data.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Optimizer or fitting failure.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace crm
