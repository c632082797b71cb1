#pragma once

#include <stdexcept>
#include <string>

namespace rigkit {

enum class ErrorCode {
  kInvalidInput,
  kDegenerateGeometry,
  kRecoveryFailed,
  kUnknownCamera,
  kDegenerateRig,
  kShapeMismatch,
  kNonFinite,
  kIo,
};

const char* ErrorCodeName(ErrorCode code);

// All recoverable failures in the library are reported with this exception.
// The code lets callers branch (e.g. fall back from pair-based focal
// recovery to the axis method) without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(ErrorCodeName(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

#define RIGKIT_CHECK(cond, code, msg)          \
  do {                                         \
    if (!(cond)) {                             \
      throw ::rigkit::Error((code), (msg));    \
    }                                          \
  } while (false)

}  // namespace rigkit
