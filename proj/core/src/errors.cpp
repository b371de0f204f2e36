#include "metarefl/errors.hpp"

namespace metarefl {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::InvalidGeometry: return "InvalidGeometry";
    case ErrorCode::AllSingular: return "AllSingular";
    case ErrorCode::RankDeficient: return "RankDeficient";
    case ErrorCode::NonFiniteResidual: return "NonFiniteResidual";
    case ErrorCode::LayoutMismatch: return "LayoutMismatch";
    case ErrorCode::OptimizerFailed: return "OptimizerFailed";
    case ErrorCode::SingularProfile: return "SingularProfile";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::DigestMismatch: return "DigestMismatch";
    case ErrorCode::SchemaError: return "SchemaError";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& detail)
    : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code), detail_(detail) {}

void fail(ErrorCode code, const std::string& detail) { throw Error(code, detail); }

}  // namespace metarefl
