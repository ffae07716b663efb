#ifndef PFAFF_ERRORS_HPP
#define PFAFF_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace pfaff {

struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Raised by the expression parser; carries the byte offset of the problem.
struct ParseError : Error {
  ParseError(const std::string& msg, std::size_t position)
      : Error(msg + " (at position " + std::to_string(position) + ")"),
        pos(position) {}
  std::size_t pos;
};

/// Evaluation failure: unbound symbol or a function argument outside its domain.
struct EvalError : Error {
  using Error::Error;
};

/// Structural misuse: dimension mismatch, degenerate form, wrong construction path.
struct StructureError : Error {
  using Error::Error;
};

/// Rejection-sampling or level-set projection could not produce enough points.
struct SamplingError : Error {
  using Error::Error;
};

/// Malformed system document; message carries the offending key path.
struct DocError : Error {
  using Error::Error;
};

}  // namespace pfaff

#endif
