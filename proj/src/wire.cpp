#include "hwfp/wire.hpp"

#include <bit>
#include <cmath>

namespace hwfp {

namespace {

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> data) : data_(data) {}

  std::uint8_t u8() { return need(1)[0]; }
  std::uint16_t u16() {
    const auto b = need(2);
    return static_cast<std::uint16_t>((b[0] << 8) | b[1]);
  }
  std::uint32_t u32() {
    const auto b = need(4);
    return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) |
           (std::uint32_t{b[2]} << 8) | std::uint32_t{b[3]};
  }
  std::span<const std::uint8_t> bytes(std::size_t n) { return need(n); }
  std::span<const std::uint8_t> rest() { return need(data_.size() - at_); }
  void finish() const {
    if (at_ != data_.size()) throw Error(ErrorCode::Malformed, "trailing bytes in body");
  }

 private:
  std::span<const std::uint8_t> need(std::size_t n) {
    if (data_.size() - at_ < n) throw Error(ErrorCode::Malformed, "body truncated");
    auto out = data_.subspan(at_, n);
    at_ += n;
    return out;
  }

  std::span<const std::uint8_t> data_;
  std::size_t at_ = 0;
};

void put16(Bytes& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

void put32(Bytes& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

void put_value(Bytes& out, const FingerprintValue& v) {
  out.push_back(static_cast<std::uint8_t>(v.tag()));
  const std::uint64_t raw =
      v.is_analog() ? std::bit_cast<std::uint64_t>(v.analog()) : v.bits();
  const int width = v.is_analog() ? 8 : 4;
  for (int i = 0; i < width; ++i) out.push_back(static_cast<std::uint8_t>(raw >> (8 * i)));
}

FingerprintValue get_value(Reader& r) {
  const std::uint8_t tag = r.u8();
  if (tag > 1) throw Error(ErrorCode::Malformed, "unknown fingerprint tag");
  const auto b = r.bytes(tag == 0 ? 8 : 4);
  std::uint64_t raw = 0;
  for (std::size_t i = 0; i < b.size(); ++i) raw |= std::uint64_t{b[i]} << (8 * i);
  if (tag == 1) return FingerprintValue::bits32(static_cast<std::uint32_t>(raw));
  return FingerprintValue::analog(std::bit_cast<double>(raw));
}

Model get_model(Reader& r) {
  const std::uint8_t m = r.u8();
  if (m > static_cast<std::uint8_t>(Model::C)) throw Error(ErrorCode::Malformed, "unknown model");
  return static_cast<Model>(m);
}

}  // namespace

std::string_view frame_kind_name(FrameKind kind) {
  switch (kind) {
    case FrameKind::EnrollBegin: return "EnrollBegin";
    case FrameKind::EnrollData: return "EnrollData";
    case FrameKind::EnrollCommit: return "EnrollCommit";
    case FrameKind::AuthRequest: return "AuthRequest";
    case FrameKind::Reply: return "Reply";
    case FrameKind::Error: return "Error";
  }
  return "?";
}

Bytes encode_frame(FrameKind kind, std::span<const std::uint8_t> body) {
  if (body.size() + 1 > kMaxFrameLength) {
    throw Error(ErrorCode::Oversized, "frame body exceeds 1 MiB");
  }
  Bytes out;
  out.reserve(kFrameHeader + body.size());
  put32(out, static_cast<std::uint32_t>(body.size() + 1));
  out.push_back(static_cast<std::uint8_t>(kind));
  out.insert(out.end(), body.begin(), body.end());
  return out;
}

std::uint32_t frame_length(std::span<const std::uint8_t, 4> p) {
  const std::uint32_t len = (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) |
                            (std::uint32_t{p[2]} << 8) | std::uint32_t{p[3]};
  if (len > kMaxFrameLength) throw Error(ErrorCode::Oversized, "declared frame length too large");
  if (len == 0) throw Error(ErrorCode::Malformed, "zero frame length");
  return len;
}

Frame decode_frame(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4) throw Error(ErrorCode::Truncated, "frame header truncated");
  const std::uint32_t len = frame_length(bytes.first<4>());
  if (bytes.size() - 4 < len) throw Error(ErrorCode::Truncated, "frame body truncated");
  if (bytes.size() - 4 > len) throw Error(ErrorCode::Malformed, "bytes after frame");
  const std::uint8_t kind = bytes[4];
  if (kind > static_cast<std::uint8_t>(FrameKind::Error)) {
    throw Error(ErrorCode::UnknownKind, "unknown frame kind " + std::to_string(kind));
  }
  return {static_cast<FrameKind>(kind), Bytes(bytes.begin() + 5, bytes.end())};
}

WireError wire_error_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::ProtocolOrder:
    case ErrorCode::IncompleteCoverage:
      return WireError::ProtocolOrder;
    case ErrorCode::UnknownDevice: return WireError::UnknownDevice;
    case ErrorCode::SealedDevice: return WireError::SealedDevice;
    case ErrorCode::NoNegatives: return WireError::NoNegatives;
    case ErrorCode::Malformed:
    case ErrorCode::Truncated:
    case ErrorCode::Oversized:
    case ErrorCode::UnknownKind:
    case ErrorCode::TagMismatch:
    case ErrorCode::DomainError:
    case ErrorCode::UnknownFeature:
    case ErrorCode::InvalidArgument:
    case ErrorCode::EmptyPayloads:
      return WireError::Malformed;
    default:
      return WireError::Internal;
  }
}

std::string_view wire_error_name(WireError e) {
  switch (e) {
    case WireError::ProtocolOrder: return "ProtocolOrder";
    case WireError::UnknownDevice: return "UnknownDevice";
    case WireError::SealedDevice: return "SealedDevice";
    case WireError::Malformed: return "Malformed";
    case WireError::NoNegatives: return "NoNegatives";
    case WireError::Internal: return "Internal";
  }
  return "?";
}

Bytes encode_enroll_begin(const EnrollBeginBody& b) {
  Bytes out;
  put16(out, b.device_id);
  out.push_back(static_cast<std::uint8_t>(b.model));
  return out;
}

EnrollBeginBody decode_enroll_begin(std::span<const std::uint8_t> body) {
  Reader r(body);
  EnrollBeginBody b;
  b.device_id = r.u16();
  b.model = get_model(r);
  r.finish();
  return b;
}

Bytes encode_enroll_data(const EnrollDataBody& b) {
  if (b.pairs.size() > 0xFFFF) throw Error(ErrorCode::Oversized, "too many pairs in one frame");
  Bytes out;
  put16(out, b.device_id);
  put16(out, static_cast<std::uint16_t>(b.pairs.size()));
  for (const auto& p : b.pairs) {
    if (p.task.args.size() > 255) throw Error(ErrorCode::InvalidArgument, "too many arguments");
    out.push_back(static_cast<std::uint8_t>(p.task.feature));
    out.push_back(static_cast<std::uint8_t>(p.task.args.size()));
    for (auto a : p.task.args) {
      if (a > 0xFFFF) throw Error(ErrorCode::InvalidArgument, "argument exceeds 16 bits");
      put16(out, static_cast<std::uint16_t>(a));
    }
    put_value(out, p.fingerprint);
  }
  return out;
}

EnrollDataBody decode_enroll_data(std::span<const std::uint8_t> body) {
  Reader r(body);
  EnrollDataBody b;
  b.device_id = r.u16();
  const std::uint16_t count = r.u16();
  b.pairs.reserve(count);
  for (std::uint16_t i = 0; i < count; ++i) {
    TrainingPair p;
    const std::uint8_t f = r.u8();
    if (f > static_cast<std::uint8_t>(Feature::Sram)) throw Error(ErrorCode::Malformed, "unknown feature");
    p.task.feature = static_cast<Feature>(f);
    const std::uint8_t nargs = r.u8();
    for (std::uint8_t k = 0; k < nargs; ++k) p.task.args.push_back(r.u16());
    p.fingerprint = get_value(r);
    b.pairs.push_back(std::move(p));
  }
  r.finish();
  return b;
}

Bytes encode_enroll_commit(std::uint16_t device_id) {
  Bytes out;
  put16(out, device_id);
  return out;
}

std::uint16_t decode_enroll_commit(std::span<const std::uint8_t> body) {
  Reader r(body);
  const auto id = r.u16();
  r.finish();
  return id;
}

Bytes encode_auth_request(const AuthRequestBody& b) {
  const Request& q = b.request;
  if (q.operation.size() > 255 || q.payloads.size() > 255) {
    throw Error(ErrorCode::InvalidArgument, "request too large for the wire");
  }
  Bytes out;
  put16(out, b.device_id);
  out.push_back(static_cast<std::uint8_t>(q.operation.size()));
  out.insert(out.end(), q.operation.begin(), q.operation.end());
  put32(out, q.nonce);
  out.push_back(static_cast<std::uint8_t>(q.payloads.size()));
  for (const auto& p : q.payloads) {
    if (p.size() > 0xFFFF) throw Error(ErrorCode::InvalidArgument, "payload too large");
    put16(out, static_cast<std::uint16_t>(p.size()));
    out.insert(out.end(), p.begin(), p.end());
  }
  const Bytes token = encode_token(b.token);
  put16(out, static_cast<std::uint16_t>(token.size()));
  out.insert(out.end(), token.begin(), token.end());
  return out;
}

AuthRequestBody decode_auth_request(std::span<const std::uint8_t> body) {
  Reader r(body);
  AuthRequestBody b;
  b.device_id = r.u16();
  const auto op = r.bytes(r.u8());
  b.request.operation.assign(op.begin(), op.end());
  b.request.nonce = r.u32();
  const std::uint8_t count = r.u8();
  for (std::uint8_t i = 0; i < count; ++i) {
    const auto p = r.bytes(r.u16());
    b.request.payloads.emplace_back(p.begin(), p.end());
  }
  const auto token = r.bytes(r.u16());
  r.finish();
  try {
    b.token = decode_token(token);
    b.request.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::Malformed, e.what());
  }
  return b;
}

Bytes encode_reply(const AuthResult& res) {
  return {static_cast<std::uint8_t>(res.decision),
          static_cast<std::uint8_t>(std::min<std::uint32_t>(res.matched, 255)),
          static_cast<std::uint8_t>(res.reason)};
}

AuthResult decode_reply(std::span<const std::uint8_t> body) {
  Reader r(body);
  AuthResult res;
  const auto d = r.u8();
  res.matched = r.u8();
  const auto reason = r.u8();
  r.finish();
  if (d > 1 || reason > static_cast<std::uint8_t>(Reason::MalformedToken)) {
    throw Error(ErrorCode::Malformed, "bad reply fields");
  }
  res.decision = static_cast<Decision>(d);
  res.reason = static_cast<Reason>(reason);
  if ((res.decision == Decision::Accept) != (res.reason == Reason::Ok)) {
    throw Error(ErrorCode::Malformed, "decision and reason disagree");
  }
  return res;
}

Bytes encode_error(const ErrorBody& e) {
  Bytes out{static_cast<std::uint8_t>(e.code)};
  out.insert(out.end(), e.message.begin(), e.message.end());
  return out;
}

ErrorBody decode_error(std::span<const std::uint8_t> body) {
  Reader r(body);
  const auto code = r.u8();
  if (code < 1 || code > 6) throw Error(ErrorCode::Malformed, "unknown error code");
  const auto msg = r.rest();
  return {static_cast<WireError>(code), std::string(msg.begin(), msg.end())};
}

}  // namespace hwfp
