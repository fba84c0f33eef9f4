#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tplrecon {

// Keep in sync with tpr_status in tplrecon.h; the C API casts between them.
enum class ErrorCode : int {
  kInvalidArgument = 1,
  kDegenerateTemplate = 2,
  kDimMismatch = 3,
  kBadMagic = 4,
  kLengthMismatch = 5,
  kNonFinite = 6,
  kIo = 7,
  kSingularSystem = 8,
  kUnknownIdentity = 9,
  kLockedOut = 10,
  kNoFalseMatch = 11,
  kOutsidePointNotFound = 12,
  kWrongMode = 13,
  kNetwork = 14,
  kProtocol = 15,
  kParse = 16,
  kInternal = 17,
};

const char* error_code_name(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Raised by the linear solver; `row` is the original equation index that
// ended up at the failing pivot, so callers can resample that equation.
class SingularSystemError : public Error {
 public:
  SingularSystemError(std::size_t row, const std::string& message)
      : Error(ErrorCode::kSingularSystem, message), row_(row) {}

  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

}  // namespace tplrecon
