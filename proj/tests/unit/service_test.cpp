#include <doctest.h>

#include <filesystem>

#include "fixture.hpp"
#include "hwfp/service.hpp"
#include "hwfp/snapshot.hpp"

using namespace hwfp;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error thrown");
  return ErrorCode::Io;
}

WireError error_code(const Frame& f) {
  REQUIRE(f.kind == FrameKind::Error);
  return decode_error(f.body).code;
}

}  // namespace

TEST_CASE("frame decoding errors") {
  const Bytes three = {0, 0, 0};
  CHECK(code_of([&] { decode_frame(three); }) == ErrorCode::Truncated);
  Bytes big = {0x00, 0x20, 0x00, 0x00, 4};
  CHECK(code_of([&] { decode_frame(big); }) == ErrorCode::Oversized);
  const Bytes zero = {0, 0, 0, 0};
  CHECK(code_of([&] { decode_frame(zero); }) == ErrorCode::Malformed);
  const Bytes kind9 = {0, 0, 0, 1, 9};
  CHECK(code_of([&] { decode_frame(kind9); }) == ErrorCode::UnknownKind);
  const Bytes short_body = {0, 0, 0, 4, 4, 0};
  CHECK(code_of([&] { decode_frame(short_body); }) == ErrorCode::Truncated);
  const Bytes trailing = {0, 0, 0, 1, 4, 7};
  CHECK(code_of([&] { decode_frame(trailing); }) == ErrorCode::Malformed);
  const Bytes ok = encode_frame(FrameKind::EnrollCommit, encode_enroll_commit(9));
  const auto f = decode_frame(ok);
  CHECK(f.kind == FrameKind::EnrollCommit);
  CHECK(decode_enroll_commit(f.body) == 9);
}

TEST_CASE("body codecs reject leftovers and short input") {
  auto begin = encode_enroll_begin({5, Model::C});
  CHECK(decode_enroll_begin(begin).model == Model::C);
  begin.push_back(0);
  CHECK(code_of([&] { decode_enroll_begin(begin); }) == ErrorCode::Malformed);
  const Bytes bad_model = {0, 1, 7};
  CHECK(code_of([&] { decode_enroll_begin(bad_model); }) == ErrorCode::Malformed);
  const Bytes bad_reply = {0, 1, 99};
  CHECK(code_of([&] { decode_reply(bad_reply); }) == ErrorCode::Malformed);
  const AuthResult r{Decision::Reject, 2, Reason::BelowThreshold};
  CHECK(decode_reply(encode_reply(r)) == r);
}

TEST_CASE("handle_message enrollment and authentication paths") {
  const auto cfg = test::small_config();
  Backend be(cfg.auth, cfg.mapping, cfg.backend);
  const auto fleet = spawn_fleet(Model::A, 3, 21);

  const auto ack = handle_message(be, FrameKind::EnrollCommit, encode_enroll_commit(fleet[0].device_id));
  CHECK(error_code(ack) == WireError::ProtocolOrder);

  for (const auto& d : fleet) {
    auto r = handle_message(be, FrameKind::EnrollBegin, encode_enroll_begin({d.device_id, d.model}));
    REQUIRE(r.kind == FrameKind::Reply);
    CHECK(decode_reply(r.body).accepted());
    Rng rng = make_rng(1, d.device_id);
    const auto pairs = enrollment_pairs(d, cfg.mapping, 300, rng);
    r = handle_message(be, FrameKind::EnrollData, encode_enroll_data({d.device_id, pairs}));
    REQUIRE(r.kind == FrameKind::Reply);
  }
  for (const auto& d : fleet) {
    const auto r = handle_message(be, FrameKind::EnrollCommit, encode_enroll_commit(d.device_id));
    REQUIRE(r.kind == FrameKind::Reply);
  }
  const auto again = handle_message(be, FrameKind::EnrollBegin,
                                    encode_enroll_begin({fleet[0].device_id, Model::A}));
  CHECK(error_code(again) == WireError::SealedDevice);

  Client client(fleet[1], cfg.auth, cfg.mapping);
  Rng rng = make_rng(2, 2);
  const auto req = client.next_request("UNLOCK", {{1, 2}});
  const auto tok = client.generate_token(req, rng).token;
  const auto body = encode_auth_request({fleet[1].device_id, req, tok});
  auto reply = handle_message(be, FrameKind::AuthRequest, body);
  REQUIRE(reply.kind == FrameKind::Reply);
  CHECK(decode_reply(reply.body).accepted());
  reply = handle_message(be, FrameKind::AuthRequest, body);
  CHECK(decode_reply(reply.body).reason == Reason::ReplayDetected);

  const auto unknown = handle_message(be, FrameKind::AuthRequest, encode_auth_request({999, req, tok}));
  CHECK(error_code(unknown) == WireError::UnknownDevice);
  const Bytes junk = {1, 2, 3};
  CHECK(error_code(handle_message(be, FrameKind::AuthRequest, junk)) == WireError::Malformed);
  CHECK(error_code(handle_message(be, FrameKind::Reply, junk)) == WireError::ProtocolOrder);
}

TEST_CASE("random bytes never authenticate") {
  auto bed = test::small_bed();
  Rng rng = make_rng(77, 0);
  const auto& dev = bed->devices()[0];
  Client client(dev, bed->backend().auth(), bed->backend().mapping());
  const auto req = client.next_request("OPEN", {{4}});
  const Bytes valid = encode_frame(FrameKind::AuthRequest,
                                   encode_auth_request({dev.device_id, req,
                                                        client.generate_token(req, rng).token}));
  int accepts = 0;
  for (int i = 0; i < 2000; ++i) {
    Bytes frame;
    if (i % 2 == 0) {
      frame.resize(rng() % 64);
      for (auto& b : frame) b = static_cast<std::uint8_t>(rng());
    } else {
      // corrupt a valid frame: flip a byte or cut it short
      frame = valid;
      if (rng() % 2) {
        frame[rng() % frame.size()] ^= static_cast<std::uint8_t>(1 + rng() % 255);
      } else {
        frame.resize(rng() % frame.size());
      }
    }
    const auto out = decode_frame(handle_frame_bytes(bed->backend(), frame));
    if (out.kind == FrameKind::Reply && decode_reply(out.body).accepted()) ++accepts;
  }
  // a flipped bit inside a fingerprint value can still land within tolerance,
  // but only once: the nonce is then spent
  CHECK(accepts <= 1);
}

TEST_CASE("endpoint parsing") {
  CHECK(parse_endpoint(":8080").port == 8080);
  CHECK(parse_endpoint(":8080").host == "127.0.0.1");
  const auto e = parse_endpoint("0.0.0.0:9");
  CHECK(e.host == "0.0.0.0");
  CHECK(format_endpoint(e) == "0.0.0.0:9");
  CHECK_THROWS_AS(parse_endpoint("nohost"), Error);
  CHECK_THROWS_AS(parse_endpoint(":70000"), Error);
}

TEST_CASE("enroll, seal and authenticate over a socket, then restore from snapshot") {
  const auto cfg = test::small_config();
  Backend be(cfg.auth, cfg.mapping, cfg.backend);
  const auto path = (std::filesystem::temp_directory_path() / "hwfp_service_snapshot.json").string();
  int commits = 0;
  Server server(be, parse_endpoint(":0"), [&](const Backend& b) {
    save_snapshot(b, path);
    ++commits;
  });
  server.start();
  REQUIRE(server.port() != 0);

  const auto fleet = spawn_fleet(Model::A, 3, 31);
  auto conn = Connection::connect({"127.0.0.1", server.port()});
  for (const auto& d : fleet) {
    Rng rng = make_rng(4, d.device_id);
    conn.upload(d.device_id, d.model, enrollment_pairs(d, cfg.mapping, 300, rng));
  }
  for (const auto& d : fleet) conn.commit(d.device_id);
  CHECK(commits == 3);
  CHECK(code_of([&] { conn.commit(fleet[0].device_id); }) == ErrorCode::SealedDevice);

  Client client(fleet[2], cfg.auth, cfg.mapping);
  Rng rng = make_rng(5, 5);
  const auto req = client.next_request("UNLOCK", {{9}});
  const auto tok = client.generate_token(req, rng).token;
  CHECK(conn.authenticate(fleet[2].device_id, req, tok).accepted());
  CHECK(conn.authenticate(fleet[2].device_id, req, tok).reason == Reason::ReplayDetected);

  // a second client on its own connection
  auto other = Connection::connect({"127.0.0.1", server.port()});
  const auto req2 = client.next_request("UNLOCK", {{10}});
  CHECK(other.authenticate(fleet[2].device_id, req2, client.generate_token(req2, rng).token)
            .accepted());
  server.stop();

  // the last snapshot was taken before any authentication
  auto restored = load_snapshot(path);
  std::filesystem::remove(path);
  CHECK(restored->devices().size() == 3);
  CHECK(restored->last_seen_nonce(fleet[2].device_id) == -1);
  CHECK(restored->score(fleet[2].device_id, req, tok) == be.score(fleet[2].device_id, req, tok));
  CHECK(restored->authenticate(fleet[2].device_id, req, tok).accepted());
}
