#ifndef TRICE_ERRORS_HPP
#define TRICE_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace trice {

/// Bad argument: out-of-range question id, over-length rationale, etc.
class DomainError : public std::invalid_argument {
 public:
  explicit DomainError(const std::string& msg) : std::invalid_argument(msg) {}
};

/// The request is well-formed but exceeds what this build can do,
/// e.g. a sequence space larger than the enumeration cap.
class CapabilityError : public std::runtime_error {
 public:
  explicit CapabilityError(const std::string& msg) : std::runtime_error(msg) {}
};

/// A conditional distribution has empty support (zero marginal).
class NoSupportError : public std::runtime_error {
 public:
  explicit NoSupportError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Conditional moments requested for a branch that does not exist
/// (acceptance probability exactly 0 or 1).
class UndefinedMomentError : public std::runtime_error {
 public:
  explicit UndefinedMomentError(const std::string& msg)
      : std::runtime_error(msg) {}
};

/// Config file failed schema validation.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Config file is not syntactically valid JSON; message carries the location.
class ParseError : public std::runtime_error {
 public:
  explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace trice

#endif  // TRICE_ERRORS_HPP
