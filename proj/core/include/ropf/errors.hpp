#pragma once

#include <stdexcept>
#include <string>

namespace ropf {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Syntax or schema error while reading case data. Carries the source
/// name and the line where the problem was found.
class ParseError : public Error {
  public:
    ParseError(const std::string &message, std::string source, int line)
        : Error(source + ":" + std::to_string(line) + ": " + message),
          source_(std::move(source)), line_(line) {}

    const std::string &source() const { return source_; }
    int line() const { return line_; }

  private:
    std::string source_;
    int line_;
};

/// Violated invariant or inconsistent model data (named field in the message).
class ModelError : public Error {
  public:
    using Error::Error;
};

/// Numerical failure inside a solver (singular KKT system, etc.).
class SolverError : public Error {
  public:
    using Error::Error;
};

} // namespace ropf
