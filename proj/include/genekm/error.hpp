#pragma once

#include <stdexcept>
#include <string>

namespace genekm {

// Base of every error the library throws. The CLI maps ValidationError to
// exit status 1 and NumericError to exit status 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad input: malformed files, inconsistent dimensions, out-of-range codes.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// The trait has zero residual variance under the intercept-only model.
class DegenerateTraitError : public ValidationError {
 public:
  DegenerateTraitError()
      : ValidationError("degenerate trait: zero residual variance under the null model") {}
};

// A diagnostic tied to a position in an input file.
class ParseError : public ValidationError {
 public:
  ParseError(const std::string& file, std::size_t line, std::size_t column, const std::string& what)
      : ValidationError(file + ":" + std::to_string(line) + ":" + std::to_string(column) + ": " + what),
        file_(file),
        line_(line),
        column_(column) {}

  const std::string& file() const noexcept { return file_; }
  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::string file_;
  std::size_t line_;
  std::size_t column_;
};

// Factorization failures, singular systems, non-convergence.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace genekm
