#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace scalekit {

// Bad configuration or invalid parameters handed to an operation.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// File / stream problems.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// CSV header does not provide a required column.
struct SchemaError : std::runtime_error {
  explicit SchemaError(const std::string& column)
      : std::runtime_error("missing required column: " + column), column(column) {}
  std::string column;
};

// A single CSV row violates the domain (non-positive numeric, parse failure).
struct RowError : std::runtime_error {
  RowError(std::size_t line, const std::string& what)
      : std::runtime_error("row " + std::to_string(line) + ": " + what), line(line) {}
  std::size_t line;
};

// invert_wrapper called with a loss outside (e, l0).
struct WrapperRangeError : std::domain_error {
  enum class Bound { Floor, Ceiling };
  WrapperRangeError(Bound b, double value)
      : std::domain_error(b == Bound::Floor ? "loss at or below the irreducible floor e"
                                            : "loss at or above the baseline l0"),
        bound(b),
        value(value) {}
  Bound bound;
  double value;
};

// Every restart of a fit failed to converge.
struct FitError : std::runtime_error {
  struct RestartDiagnostic {
    bool converged = false;
    double objective = 0.0;
    int iterations = 0;
  };
  FitError(const std::string& what, std::vector<RestartDiagnostic> diags)
      : std::runtime_error(what), restarts(std::move(diags)) {}
  std::vector<RestartDiagnostic> restarts;
};

// An allocation solve did not reach the requested tolerance.
struct SolveError : std::runtime_error {
  SolveError(const std::string& what, double residual)
      : std::runtime_error(what), residual(residual) {}
  double residual;
};

}  // namespace scalekit
