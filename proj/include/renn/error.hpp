#pragma once

#include <stdexcept>
#include <string>

namespace renn {

/// Violated precondition of a public operation (bad shapes, invalid indices,
/// inconsistent structure).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// NaN / Inf produced inside a numeric routine. `where()` names the op.
class NumericFault : public std::runtime_error {
 public:
  NumericFault(const std::string& where, const std::string& detail)
      : std::runtime_error("numeric fault in " + where + ": " + detail), where_(where) {}
  const std::string& where() const noexcept { return where_; }

 private:
  std::string where_;
};

/// Exhaustive enumeration would exceed the state budget.
class CapacityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed model / dataset / config text. Carries the 1-based line number.
class ParseError : public std::runtime_error {
 public:
  ParseError(int line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  int line() const noexcept { return line_; }

 private:
  int line_;
};

/// Value outside the mathematical domain of an operation (e.g. log of a
/// non-positive potential).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A marginal query whose scope is not covered by any region.
class QueryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace renn
