#pragma once

#include <stdexcept>
#include <string>

namespace subag {

/// Every failure raised by the library. Messages are meant for end users and
/// name the failing replicate or resample where one exists.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a stopping rule cannot be honoured on a given sample.
class GrowthError : public Error {
 public:
  using Error::Error;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw Error(message);
}

}  // namespace subag
