// Error taxonomy: parse errors carry a line number, validation errors name the
// offending entity, contract errors flag precondition breaches by the caller.
#pragma once

#include <stdexcept>
#include <string>

namespace mcasim {

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, int line = -1)
      : std::runtime_error(line >= 0 ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The input graph is disconnected or otherwise topologically unusable.
class TopologyError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// A caller broke a documented precondition.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Linear algebra failed (singular factorization, lost rank, ...).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mcasim
