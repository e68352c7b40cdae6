#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cntm {

// Shape/arity violations in tensor operations.
struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Caller misuse: unknown enum value, non-scalar loss, bad flag.
struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// NaN/Inf or division by zero in a numeric routine.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Inconsistent data: out-of-range target, codebook mismatch, unknown symbol.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct LookupError : DataError {
  using DataError::DataError;
};

struct SplitError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace cntm
