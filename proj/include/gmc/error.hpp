#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace gmc {

/// Raised when a file (CSV or model document) cannot be interpreted.
/// `location` names where the problem was found, e.g. "line 4, column 2"
/// or "planes.weights[3]".
class ParseError : public std::runtime_error {
 public:
  ParseError(std::string location, std::string message)
      : std::runtime_error(location.empty() ? message : location + ": " + message),
        location_(std::move(location)),
        message_(std::move(message)) {}

  const std::string& location() const noexcept { return location_; }
  const std::string& message() const noexcept { return message_; }

 private:
  std::string location_;
  std::string message_;
};

/// Model document was written by an incompatible format version.
class VersionMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Training produced a non-finite loss or gradient.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operation is well-formed but not supported for this model configuration.
class Unsupported : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void require(bool condition, const char* message) {
  if (!condition) throw std::invalid_argument(message);
}

inline void require(bool condition, const std::string& message) {
  if (!condition) throw std::invalid_argument(message);
}

}  // namespace detail
}  // namespace gmc
