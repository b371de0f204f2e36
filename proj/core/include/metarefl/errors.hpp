#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace metarefl {

enum class ErrorCode {
  InvalidArgument,
  InvalidGeometry,
  AllSingular,
  RankDeficient,
  NonFiniteResidual,
  LayoutMismatch,
  OptimizerFailed,
  SingularProfile,
  IoError,
  DigestMismatch,
  SchemaError,
};

std::string_view to_string(ErrorCode code) noexcept;

// Every failure raised by the library carries one of the codes above; callers
// (CLI exit codes, HTTP statuses) dispatch on code() rather than on the type.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail);

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& detail);

}  // namespace metarefl
