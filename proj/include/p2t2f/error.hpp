#pragma once

#include <stdexcept>
#include <string>

namespace p2t2f {

// Root of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

class InvalidPartition : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Training produced a non-finite objective.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& where, std::size_t iteration)
      : Error(where + ": non-finite objective at iteration " +
              std::to_string(iteration)),
        iteration_(iteration) {}

  std::size_t iteration() const noexcept { return iteration_; }

 private:
  std::size_t iteration_;
};

namespace detail {

inline void require(bool ok, const char* msg) {
  if (!ok) throw InvalidArgument(msg);
}

inline void require_shape(bool ok, const char* msg) {
  if (!ok) throw ShapeMismatch(msg);
}

}  // namespace detail
}  // namespace p2t2f
