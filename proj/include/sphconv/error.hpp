#ifndef SPHCONV_ERROR_HPP_
#define SPHCONV_ERROR_HPP_

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sphconv {

/// Base class of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid kernel, model or training configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Input data that cannot be processed (empty clouds, zero extent, bad labels).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Malformed text input; carries the 1-based line number of the offending line.
class ParseError : public DataError {
 public:
  ParseError(std::size_t line, const std::string& what)
      : DataError("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Non-finite values produced during training or inference.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace sphconv

#endif  // SPHCONV_ERROR_HPP_
