#pragma once

#include <stdexcept>
#include <string>

namespace gcfem {

/// Invalid argument or option value (out-of-range level, unsupported degree, ...).
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed mesh or config file. The message names the offending line.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, int line)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  int line() const noexcept { return line_; }

 private:
  int line_;
};

class GeometryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Problem data violating its invariants (e.g. non-positive obstacle).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Linear solve failure; carries the achieved relative residual when known.
class SolverError : public std::runtime_error {
 public:
  explicit SolverError(const std::string& what, double residual = -1.0)
      : std::runtime_error(what), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace gcfem
