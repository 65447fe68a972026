#pragma once

#include <stdexcept>
#include <string>

namespace cellfate {

// A documented precondition of an operation does not hold for the inputs.
class PreconditionViolated : public std::domain_error {
 public:
  explicit PreconditionViolated(const std::string& what) : std::domain_error(what) {}
};

// Argument outside the mathematical domain of a function (special functions, grids).
class DomainError : public std::domain_error {
 public:
  explicit DomainError(const std::string& what) : std::domain_error(what) {}
};

// Text input (kernel grammar, model grammar) could not be parsed.
class ParseError : public std::invalid_argument {
 public:
  explicit ParseError(const std::string& what) : std::invalid_argument(what) {}
};

// An iterative constructive search ran out of room before succeeding.
class SearchExhausted : public std::runtime_error {
 public:
  explicit SearchExhausted(const std::string& what) : std::runtime_error(what) {}
};

// A Monte Carlo request would exceed the configured work budget.
class BudgetExceeded : public std::runtime_error {
 public:
  explicit BudgetExceeded(const std::string& what) : std::runtime_error(what) {}
};

// Requested statistic needs per-cell snapshots that were not recorded.
class SnapshotsMissing : public std::logic_error {
 public:
  explicit SnapshotsMissing(const std::string& what) : std::logic_error(what) {}
};

}  // namespace cellfate
