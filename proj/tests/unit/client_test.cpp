#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "hwfp/client.hpp"
#include "hwfp/error.hpp"

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

DeviceProfile device() { return spawn_fleet(Model::A, 1, 17)[0]; }

}  // namespace

TEST_CASE("poison formula") {
  CHECK(poison_value(FingerprintValue::bits32(16), 0.125, 1.0).bits() == 19u);
  CHECK(poison_value(FingerprintValue::analog(100.0), 0.1, 1.0).analog() ==
        doctest::Approx(111.0));
  CHECK(poison_value(FingerprintValue::analog(-50.0), 0.2, 1.0).analog() ==
        doctest::Approx(-59.0));
  // SRAM words wrap modulo 2^32
  const auto w = poison_value(FingerprintValue::bits32(0xFFFFFFFFu), 0.5, 1.0).bits();
  const double exact = std::round(4294967295.0 * 1.5 + 1.0);
  CHECK(w == static_cast<std::uint32_t>(std::fmod(exact, 4294967296.0)));
}

TEST_CASE("poison mask keeps exactly usedNum raw entries") {
  Rng rng = make_rng(1, 3);
  for (std::uint32_t used = 1; used <= 10; ++used) {
    const auto mask = choose_poison_mask(10, used, rng);
    CHECK(mask.size() == 10);
    CHECK(std::count(mask.begin(), mask.end(), true) == used);
  }
  CHECK(code_of([&] { choose_poison_mask(10, 0, rng); }) == ErrorCode::RangeError);
  CHECK(code_of([&] { choose_poison_mask(10, 11, rng); }) == ErrorCode::RangeError);
}

TEST_CASE("auth config validation") {
  AuthConfig ok;
  CHECK_NOTHROW(ok.validate());
  AuthConfig bad = ok;
  bad.accept_num = 6;
  CHECK(code_of([&] { bad.validate(); }) == ErrorCode::RangeError);
  bad = ok;
  bad.used_num = 0;
  CHECK(code_of([&] { bad.validate(); }) == ErrorCode::RangeError);
  bad = ok;
  bad.noise_lo = 0.3;
  CHECK(code_of([&] { bad.validate(); }) == ErrorCode::RangeError);
  bad = ok;
  bad.total_num = 0;
  CHECK(code_of([&] { bad.validate(); }) == ErrorCode::RangeError);
}

TEST_CASE("token carries every mapped task, poisoned outside the mask") {
  const auto dev = device();
  const MappingConfig mapping;
  Client client(dev, AuthConfig{}, mapping);
  Rng rng = make_rng(4, 4);
  const Request req = client.next_request("UNLOCK", {{1}, {2}});
  CHECK(req.nonce == 1);
  const auto issued = client.generate_token(req, rng);
  CHECK(issued.token.nonce == 1);
  CHECK(issued.token.entries.size() == 10);
  CHECK(std::count(issued.raw_mask.begin(), issued.raw_mask.end(), true) == 5);
  CHECK(issued.tasks == map_message(req, mapping));
  for (std::size_t i = 0; i < 10; ++i) {
    const auto& got = issued.token.entries[i].fingerprint;
    CHECK(issued.token.entries[i].task_index == i);
    if (issued.raw_mask[i]) {
      CHECK(got == issued.raw[i]);
    } else if (got.is_analog()) {
      const double r = issued.raw[i].analog();
      const double n = (got.analog() - 1.0) / r - 1.0;
      CHECK(n >= 0.08 - 1e-9);
      CHECK(n <= 0.2 + 1e-9);
    } else {
      CHECK(got != issued.raw[i]);
    }
  }
  CHECK(client.last_nonce() == 1u);
  CHECK(client.next_request("UNLOCK", {{1}}).nonce == 2);
}

TEST_CASE("usedNum equal to totalNum sends raw fingerprints") {
  AuthConfig auth;
  auth.used_num = 10;
  Client client(device(), auth, MappingConfig{});
  Rng rng = make_rng(4, 5);
  const auto issued = client.generate_token(client.next_request("X", {{9}}), rng);
  for (std::size_t i = 0; i < 10; ++i) CHECK(issued.token.entries[i].fingerprint == issued.raw[i]);
}

TEST_CASE("fixed seed gives an identical token") {
  const auto dev = device();
  Client a(dev, AuthConfig{}, MappingConfig{}), b(dev, AuthConfig{}, MappingConfig{});
  Rng ra = make_rng(8, 8), rb = make_rng(8, 8);
  const Request req{"GO", 5, {{1, 2, 3}}};
  CHECK(a.generate_token(req, ra).token == b.generate_token(req, rb).token);
}

TEST_CASE("nonces must strictly increase") {
  Client client(device(), AuthConfig{}, MappingConfig{});
  Rng rng = make_rng(9, 9);
  client.generate_token({"GO", 10, {{1}}}, rng);
  CHECK(code_of([&] { client.generate_token({"GO", 10, {{1}}}, rng); }) ==
        ErrorCode::NonceRegression);
  CHECK(code_of([&] { client.generate_token({"GO", 3, {{1}}}, rng); }) ==
        ErrorCode::NonceRegression);
  CHECK_NOTHROW(client.generate_token({"GO", 11, {{1}}}, rng));
}

TEST_CASE("client rejects a mapping of another length") {
  AuthConfig auth;
  MappingConfig mapping;
  mapping.total_num = 12;
  CHECK_THROWS_AS(Client(device(), auth, mapping), Error);
}

TEST_CASE("token codec") {
  Token t{0xA1B2C3D4, {{0, FingerprintValue::analog(-2.5)}, {1, FingerprintValue::bits32(7)}}};
  const Bytes b = encode_token(t);
  CHECK(b.size() == 4 + 1 + (2 + 8) + (2 + 4));
  CHECK(b[0] == 0xA1);
  CHECK(b[4] == 2);
  CHECK(decode_token(b) == t);
  CHECK(code_of([&] { decode_token(std::span(b).first(3)); }) == ErrorCode::Truncated);
  CHECK(code_of([&] { decode_token(std::span(b).first(b.size() - 1)); }) == ErrorCode::Truncated);
  Bytes extra = b;
  extra.push_back(0);
  CHECK(code_of([&] { decode_token(extra); }) == ErrorCode::Malformed);
  Bytes bad_tag = b;
  bad_tag[6] = 9;
  CHECK(code_of([&] { decode_token(bad_tag); }) == ErrorCode::Malformed);
}
