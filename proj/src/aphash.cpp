#include "hwfp/aphash.hpp"

#include "hwfp/error.hpp"

namespace hwfp {

std::uint32_t ap_hash(std::span<const std::uint8_t> input) {
  std::uint32_t hash = 0xAAAAAAAAu;
  for (std::size_t i = 0; i < input.size(); ++i) {
    const std::uint32_t byte = input[i];
    if ((i & 1) == 0) {
      hash ^= (hash << 7) ^ (byte * (hash >> 3));
    } else {
      hash ^= ~((hash << 11) + (byte ^ (hash >> 5)));
    }
  }
  return hash;
}

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::EmptyPayloads: return "EmptyPayloads";
    case ErrorCode::DomainError: return "DomainError";
    case ErrorCode::UnknownFeature: return "UnknownFeature";
    case ErrorCode::RangeError: return "RangeError";
    case ErrorCode::NonceRegression: return "NonceRegression";
    case ErrorCode::IncompleteCoverage: return "IncompleteCoverage";
    case ErrorCode::UnseenAddress: return "UnseenAddress";
    case ErrorCode::NoNegatives: return "NoNegatives";
    case ErrorCode::TagMismatch: return "TagMismatch";
    case ErrorCode::DegenerateInput: return "DegenerateInput";
    case ErrorCode::DegenerateSample: return "DegenerateSample";
    case ErrorCode::UnknownVictim: return "UnknownVictim";
    case ErrorCode::Truncated: return "Truncated";
    case ErrorCode::Oversized: return "Oversized";
    case ErrorCode::UnknownKind: return "UnknownKind";
    case ErrorCode::ProtocolOrder: return "ProtocolOrder";
    case ErrorCode::UnknownDevice: return "UnknownDevice";
    case ErrorCode::SealedDevice: return "SealedDevice";
    case ErrorCode::Malformed: return "Malformed";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace hwfp
