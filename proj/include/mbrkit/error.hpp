#pragma once

#include <stdexcept>
#include <string>

namespace mbrkit {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input that does not parse. Carries the 1-based line number when known
/// (0 otherwise).
class ParseError : public Error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : Error(source + (line ? ":" + std::to_string(line) : std::string()) + ": " + what),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Arguments or configuration that violate a documented precondition.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A quantity that is mathematically undefined for the given input
/// (zero-length reference, constant sequence, silent buffer...).
class UndefinedError : public Error {
 public:
  using Error::Error;
};

}  // namespace mbrkit
