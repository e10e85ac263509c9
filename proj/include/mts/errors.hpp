#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mts {

/// Operand shapes do not conform for the requested operation.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Input outside the mathematical domain of an operation (e.g. log of 0).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A caller broke an API precondition.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Invalid dataset contents or generation parameters.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed text input; carries the 1-based line number of the offending row.
class ParseError : public DataError {
 public:
  ParseError(std::size_t line, const std::string& what)
      : DataError("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Training produced a non-finite loss.
class NumericalAbort : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mts
