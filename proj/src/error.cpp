#include "tplrecon/error.hpp"

namespace tplrecon {

const char* error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "INVALID_ARGUMENT";
    case ErrorCode::kDegenerateTemplate: return "DEGENERATE_TEMPLATE";
    case ErrorCode::kDimMismatch: return "BAD_DIM";
    case ErrorCode::kBadMagic: return "BAD_MAGIC";
    case ErrorCode::kLengthMismatch: return "LENGTH_MISMATCH";
    case ErrorCode::kNonFinite: return "NON_FINITE";
    case ErrorCode::kIo: return "IO";
    case ErrorCode::kSingularSystem: return "SINGULAR";
    case ErrorCode::kUnknownIdentity: return "UNKNOWN_ID";
    case ErrorCode::kLockedOut: return "LOCKED";
    case ErrorCode::kNoFalseMatch: return "NO_FALSE_MATCH";
    case ErrorCode::kOutsidePointNotFound: return "OUTSIDE_POINT_NOT_FOUND";
    case ErrorCode::kWrongMode: return "WRONG_MODE";
    case ErrorCode::kNetwork: return "NETWORK";
    case ErrorCode::kProtocol: return "PROTOCOL";
    case ErrorCode::kParse: return "PARSE";
    case ErrorCode::kInternal: return "INTERNAL";
  }
  return "UNKNOWN";
}

}  // namespace tplrecon
