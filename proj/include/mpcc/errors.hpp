#pragma once

#include <stdexcept>
#include <string>

namespace mpcc {

// Each category maps onto one CLI exit code (see tools/mpcc.cpp).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad input, violated precondition, impossible configuration. Exit code 1.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// An iterative solver stopped without meeting its tolerance. Exit code 2.
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

/// A numerical invariant that should hold by construction failed. Exit code 3.
class InvariantError : public Error {
 public:
  using Error::Error;
};

class ParseError : public ValidationError {
 public:
  ParseError(int line, const std::string& what)
      : ValidationError("line " + std::to_string(line) + ": " + what), line_(line) {}
  int line() const noexcept { return line_; }

 private:
  int line_;
};

}  // namespace mpcc
