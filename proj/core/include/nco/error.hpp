#pragma once

#include <stdexcept>
#include <string>

namespace nco {

// Every library failure maps onto one of these; the CLI turns them into exit codes.
enum class ErrorKind {
  kValidation,     // bad input, bad shape, bad file
  kStateMismatch,  // checkpoint/config/data disagree
  kNumerical,      // non-finite loss, solver failure
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what)
      : Error(ErrorKind::kValidation, what) {}
};

/// Tensor extents that do not fit the operation.
class ShapeError : public ValidationError {
 public:
  explicit ShapeError(const std::string& what) : ValidationError(what) {}
};

class StateMismatchError : public Error {
 public:
  explicit StateMismatchError(const std::string& what)
      : Error(ErrorKind::kStateMismatch, what) {}
};

class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what)
      : Error(ErrorKind::kNumerical, what) {}
};

}  // namespace nco
