#pragma once

#include <stdexcept>
#include <string>

namespace tds {

// Caller-fixable problems: bad configuration, malformed input, refused budgets.
// The CLI maps these to exit code 2.
class InvalidInput : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public InvalidInput {
 public:
  using InvalidInput::InvalidInput;
};

class ParseError : public InvalidInput {
 public:
  ParseError(const std::string& what, std::size_t row, std::size_t column)
      : InvalidInput(what), row_(row), column_(column) {}
  std::size_t row() const { return row_; }
  std::size_t column() const { return column_; }

 private:
  std::size_t row_;
  std::size_t column_;
};

class DimensionMismatch : public InvalidInput {
 public:
  DimensionMismatch(std::size_t expected, std::size_t actual, const std::string& where = {})
      : InvalidInput("dimension mismatch" + (where.empty() ? std::string() : " at " + where) + ": expected " +
                     std::to_string(expected) + ", got " + std::to_string(actual)),
        expected_(expected),
        actual_(actual) {}
  std::size_t expected() const { return expected_; }
  std::size_t actual() const { return actual_; }

 private:
  std::size_t expected_;
  std::size_t actual_;
};

// A computed size (budget, index count, cell count) over its cap. Carries the
// computed value so callers can report it.
class BudgetRefused : public InvalidInput {
 public:
  BudgetRefused(const std::string& what, double value, double cap)
      : InvalidInput(what + ": " + std::to_string(value) + " exceeds cap " + std::to_string(cap)),
        value_(value),
        cap_(cap) {}
  double value() const { return value_; }
  double cap() const { return cap_; }

 private:
  double value_;
  double cap_;
};

// Failures during a run that are not the caller's fault. Exit code 3.
class RuntimeFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SamplingError : public RuntimeFailure {
 public:
  using RuntimeFailure::RuntimeFailure;
};

class NumericalError : public RuntimeFailure {
 public:
  using RuntimeFailure::RuntimeFailure;
};

}  // namespace tds
