#pragma once

#include <stdexcept>
#include <string>

namespace capstone {

// Raised for anything the caller handed us that we cannot use: malformed
// files, out-of-range values, inconsistent configuration. The CLI maps it
// to exit code 2; every other exception is treated as an internal failure.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Parse failure that knows where it happened.
class ParseError : public InputError {
 public:
  ParseError(const std::string& what, std::size_t line)
      : InputError(what + " (line " + std::to_string(line) + ")"), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace capstone
