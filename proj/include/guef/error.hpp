#pragma once

#include <stdexcept>
#include <string>

namespace guef {

/// Raised when an input violates a documented precondition.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A primitive produced NaN or infinity.
class NonFiniteValueError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Dempster combination is undefined when the conflict coefficient reaches 1.
class TotalConflictError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

enum class FormatErrorKind { kBadMagic, kBadVersion, kBadDtype, kTruncated, kShapeOverflow, kIo, kSyntax };

class FormatError : public std::runtime_error {
 public:
  FormatError(FormatErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  FormatErrorKind kind() const noexcept { return kind_; }

 private:
  FormatErrorKind kind_;
};

/// Training produced a non-finite loss.
class NonFiniteLossError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace guef
