#include <bit>
#include <cstring>

#include "hwfp/client.hpp"
#include "hwfp/error.hpp"

namespace hwfp {

namespace {

void put_le(Bytes& out, std::uint64_t v, int width) {
  for (int i = 0; i < width; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_le(std::span<const std::uint8_t> in, std::size_t at, int width) {
  std::uint64_t v = 0;
  for (int i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(in[at + i]) << (8 * i);
  return v;
}

}  // namespace

Bytes encode_token(const Token& token) {
  if (token.entries.size() > 255) {
    throw Error(ErrorCode::InvalidArgument, "token holds more than 255 entries");
  }
  Bytes out;
  out.reserve(5 + token.entries.size() * 10);
  out.push_back(static_cast<std::uint8_t>(token.nonce >> 24));
  out.push_back(static_cast<std::uint8_t>(token.nonce >> 16));
  out.push_back(static_cast<std::uint8_t>(token.nonce >> 8));
  out.push_back(static_cast<std::uint8_t>(token.nonce));
  out.push_back(static_cast<std::uint8_t>(token.entries.size()));
  for (const auto& e : token.entries) {
    out.push_back(e.task_index);
    out.push_back(static_cast<std::uint8_t>(e.fingerprint.tag()));
    if (e.fingerprint.is_analog()) {
      put_le(out, std::bit_cast<std::uint64_t>(e.fingerprint.analog()), 8);
    } else {
      put_le(out, e.fingerprint.bits(), 4);
    }
  }
  return out;
}

Token decode_token(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 5) throw Error(ErrorCode::Truncated, "token header truncated");
  Token token;
  token.nonce = (std::uint32_t{bytes[0]} << 24) | (std::uint32_t{bytes[1]} << 16) |
                (std::uint32_t{bytes[2]} << 8) | std::uint32_t{bytes[3]};
  const std::size_t count = bytes[4];
  std::size_t at = 5;
  token.entries.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    if (at + 2 > bytes.size()) throw Error(ErrorCode::Truncated, "token entry truncated");
    TokenEntry e;
    e.task_index = bytes[at];
    const std::uint8_t tag = bytes[at + 1];
    at += 2;
    if (tag == 0) {
      if (at + 8 > bytes.size()) throw Error(ErrorCode::Truncated, "analog value truncated");
      e.fingerprint = FingerprintValue::analog(std::bit_cast<double>(get_le(bytes, at, 8)));
      at += 8;
    } else if (tag == 1) {
      if (at + 4 > bytes.size()) throw Error(ErrorCode::Truncated, "word value truncated");
      e.fingerprint = FingerprintValue::bits32(static_cast<std::uint32_t>(get_le(bytes, at, 4)));
      at += 4;
    } else {
      throw Error(ErrorCode::Malformed, "unknown fingerprint tag");
    }
    token.entries.push_back(e);
  }
  if (at != bytes.size()) throw Error(ErrorCode::Malformed, "trailing bytes after token");
  return token;
}

}  // namespace hwfp
