#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace hwfp {

enum class ErrorCode {
  InvalidArgument,
  EmptyPayloads,
  DomainError,
  UnknownFeature,
  RangeError,
  NonceRegression,
  IncompleteCoverage,
  UnseenAddress,
  NoNegatives,
  TagMismatch,
  DegenerateInput,
  DegenerateSample,
  UnknownVictim,
  Truncated,
  Oversized,
  UnknownKind,
  ProtocolOrder,
  UnknownDevice,
  SealedDevice,
  Malformed,
  Io,
};

std::string_view error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace hwfp
