#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cln {

// Base of every error raised by the library. The CLI maps NumericalError to
// exit code 2 and everything else to exit code 1.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ShapeError : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

struct IndexError : Error {
  using Error::Error;
};

struct ValidationError : Error {
  using Error::Error;
};

struct ReferentialError : Error {
  using Error::Error;
};

struct ConsistencyError : Error {
  using Error::Error;
};

struct ParseError : Error {
  ParseError(const std::string& file, std::size_t line, const std::string& what)
      : Error(file + ":" + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Non-finite loss, failed gradient check and the like.
struct NumericalError : Error {
  using Error::Error;
};

}  // namespace cln
