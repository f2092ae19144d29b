#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hwfp/backend.hpp"
#include "hwfp/client.hpp"
#include "hwfp/error.hpp"

namespace hwfp {

// Frame: length (4, big-endian, = body size + 1) | kind (1) | body.
// Body integers are big-endian; fingerprint values reuse the token layout.
enum class FrameKind : std::uint8_t {
  EnrollBegin = 0,
  EnrollData = 1,
  EnrollCommit = 2,
  AuthRequest = 3,
  Reply = 4,
  Error = 5,
};

inline constexpr std::size_t kFrameHeader = 5;
inline constexpr std::uint32_t kMaxFrameLength = 1u << 20;

std::string_view frame_kind_name(FrameKind kind);

struct Frame {
  FrameKind kind = FrameKind::Reply;
  Bytes body;

  friend bool operator==(const Frame&, const Frame&) = default;
};

Bytes encode_frame(FrameKind kind, std::span<const std::uint8_t> body);
inline Bytes encode_frame(const Frame& f) { return encode_frame(f.kind, f.body); }

/// Decodes exactly one frame. Truncated, Oversized, UnknownKind, or
/// Malformed (zero length or trailing bytes).
Frame decode_frame(std::span<const std::uint8_t> bytes);

/// Value of the length prefix; Oversized / Malformed on a bad prefix.
std::uint32_t frame_length(std::span<const std::uint8_t, 4> prefix);

// Error frame codes.
enum class WireError : std::uint8_t {
  ProtocolOrder = 1,
  UnknownDevice = 2,
  SealedDevice = 3,
  Malformed = 4,
  NoNegatives = 5,
  Internal = 6,
};

WireError wire_error_for(ErrorCode code);
std::string_view wire_error_name(WireError e);

struct EnrollBeginBody {
  std::uint16_t device_id = 0;
  Model model = Model::A;
};

struct EnrollDataBody {
  std::uint16_t device_id = 0;
  std::vector<TrainingPair> pairs;
};

struct AuthRequestBody {
  std::uint16_t device_id = 0;
  Request request;
  Token token;
};

struct ErrorBody {
  WireError code = WireError::Internal;
  std::string message;
};

// Body codecs. Decoders throw Malformed on anything that does not parse
// cleanly to the end of the body.
Bytes encode_enroll_begin(const EnrollBeginBody& b);
EnrollBeginBody decode_enroll_begin(std::span<const std::uint8_t> body);

/// At most 65535 pairs per frame.
Bytes encode_enroll_data(const EnrollDataBody& b);
EnrollDataBody decode_enroll_data(std::span<const std::uint8_t> body);

Bytes encode_enroll_commit(std::uint16_t device_id);
std::uint16_t decode_enroll_commit(std::span<const std::uint8_t> body);

Bytes encode_auth_request(const AuthRequestBody& b);
AuthRequestBody decode_auth_request(std::span<const std::uint8_t> body);

Bytes encode_reply(const AuthResult& r);
AuthResult decode_reply(std::span<const std::uint8_t> body);

Bytes encode_error(const ErrorBody& e);
ErrorBody decode_error(std::span<const std::uint8_t> body);

}  // namespace hwfp
