#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <set>
#include <thread>

#include "fixture.hpp"
#include "hwfp/backend.hpp"
#include "hwfp/config_io.hpp"
#include "hwfp/error.hpp"
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

std::vector<TrainingPair> pairs_for(const DeviceProfile& d, const MappingConfig& m, std::uint64_t seed) {
  Rng rng = make_rng(seed, 1);
  return enrollment_pairs(d, m, 300, rng);
}

}  // namespace

TEST_CASE("least squares recovers exact and transformed lines") {
  std::vector<std::pair<double, double>> pts, poisoned;
  for (int x = 0; x < 10; ++x) {
    pts.emplace_back(x, 2.0 * x + 3);
    poisoned.emplace_back(x, 1.1 * (2.0 * x + 3) + 1);
  }
  auto [a, b] = fit_linear_least_squares(pts);
  CHECK(a == doctest::Approx(2.0));
  CHECK(b == doctest::Approx(3.0));
  auto [a2, b2] = fit_linear_least_squares(poisoned);
  CHECK(a2 == doctest::Approx(2.2));
  CHECK(b2 == doctest::Approx(4.3));
  const std::vector<std::pair<double, double>> flat = {{1, 1}, {1, 2}, {1, 3}};
  CHECK(code_of([&] { fit_linear_least_squares(flat); }) == ErrorCode::DegenerateInput);
}

TEST_CASE("backend construction rules") {
  MappingConfig m;
  m.variant = MappingVariant::H1Only;
  CHECK_THROWS_AS(Backend(AuthConfig{}, m), Error);
  MappingConfig longer;
  longer.total_num = 11;
  CHECK_THROWS_AS(Backend(AuthConfig{}, longer), Error);
}

TEST_CASE("enrollment ordering and sealing") {
  const auto m = mapping_for({Feature::Pwm, Feature::Sram});
  Backend be(AuthConfig{}, m);
  const auto fleet = spawn_fleet(Model::A, 3, 3);
  const auto p0 = pairs_for(fleet[0], m, 1);
  const auto p1 = pairs_for(fleet[1], m, 2);
  const auto p2 = pairs_for(fleet[2], m, 4);

  CHECK(code_of([&] { be.add_pairs(1, p0); }) == ErrorCode::ProtocolOrder);
  CHECK(code_of([&] { be.commit_enrollment(1); }) == ErrorCode::ProtocolOrder);

  be.begin_enrollment(fleet[0].device_id, Model::A);
  CHECK(be.is_pending(fleet[0].device_id));
  // no other device yet: nothing to calibrate against
  be.add_pairs(fleet[0].device_id, p0);
  CHECK(code_of([&] { be.commit_enrollment(fleet[0].device_id); }) == ErrorCode::NoNegatives);

  be.begin_enrollment(fleet[1].device_id, Model::A);
  be.add_pairs(fleet[1].device_id, p1);
  be.begin_enrollment(fleet[2].device_id, Model::A);
  std::vector<TrainingPair> only_pwm;
  std::copy_if(p2.begin(), p2.end(), std::back_inserter(only_pwm),
               [](const auto& p) { return p.task.feature == Feature::Pwm; });
  be.add_pairs(fleet[2].device_id, only_pwm);
  be.commit_enrollment(fleet[0].device_id);
  CHECK(be.is_enrolled(fleet[0].device_id));
  CHECK_FALSE(be.is_pending(fleet[0].device_id));
  CHECK(code_of([&] { be.commit_enrollment(fleet[2].device_id); }) == ErrorCode::IncompleteCoverage);
  be.commit_enrollment(fleet[1].device_id);

  CHECK(code_of([&] { be.begin_enrollment(fleet[0].device_id, Model::A); }) == ErrorCode::SealedDevice);
  CHECK(code_of([&] { be.add_pairs(fleet[0].device_id, p0); }) == ErrorCode::SealedDevice);
  CHECK(code_of([&] { be.commit_enrollment(fleet[0].device_id); }) == ErrorCode::SealedDevice);

  std::vector<TrainingPair> bad = {p2.front()};
  bad[0].task.args.push_back(0);
  CHECK_THROWS_AS(be.add_pairs(fleet[2].device_id, bad), Error);
  CHECK(be.last_seen_nonce(fleet[0].device_id) == -1);
  CHECK(code_of([&] { be.last_seen_nonce(999); }) == ErrorCode::UnknownDevice);
}

TEST_CASE("authentication, replay guard and malformed tokens") {
  auto bed = test::small_bed();
  Backend& be = bed->backend();
  const auto& dev = bed->devices()[0];
  Client client(dev, be.auth(), be.mapping());
  Rng rng = make_rng(7, 7);

  const Request r1 = client.next_request("UNLOCK", {{1}, {2}});
  const auto t1 = client.generate_token(r1, rng);
  const auto ok = be.authenticate(dev.device_id, r1, t1.token);
  CHECK(ok.accepted());
  CHECK(ok.reason == Reason::Ok);
  CHECK(ok.matched >= be.auth().accept_num);
  CHECK(be.last_seen_nonce(dev.device_id) == 1);

  const auto again = be.authenticate(dev.device_id, r1, t1.token);
  CHECK(again.decision == Decision::Reject);
  CHECK(again.reason == Reason::ReplayDetected);

  const auto unknown = be.authenticate(4242, r1, t1.token);
  CHECK(unknown.reason == Reason::UnknownDevice);

  const Request r2 = client.next_request("UNLOCK", {{1}, {2}});
  auto t2 = client.generate_token(r2, rng).token;
  Token short_token = t2;
  short_token.entries.pop_back();
  const auto bad = be.authenticate(dev.device_id, r2, short_token);
  CHECK(bad.reason == Reason::MalformedToken);
  CHECK(bad.matched == 0);
  Token wrong_nonce = t2;
  wrong_nonce.nonce += 1;
  CHECK(be.authenticate(dev.device_id, r2, wrong_nonce).reason == Reason::MalformedToken);
  Token swapped = t2;
  for (auto& e : swapped.entries) {
    e.fingerprint = e.fingerprint.is_analog() ? FingerprintValue::bits32(1) : FingerprintValue::analog(1);
  }
  CHECK(be.authenticate(dev.device_id, r2, swapped).reason == Reason::MalformedToken);
  Request empty = r2;
  empty.payloads.clear();
  CHECK(be.authenticate(dev.device_id, empty, t2).reason == Reason::MalformedToken);
  // failed attempts do not move the nonce record
  CHECK(be.last_seen_nonce(dev.device_id) == 1);
  CHECK(be.authenticate(dev.device_id, r2, t2).accepted());
}

TEST_CASE("raising acceptNum never turns a reject into an accept") {
  auto bed = test::small_bed();
  const Backend& be = bed->backend();
  const auto& victim = bed->devices()[0];
  const auto& other = bed->devices()[1];
  Rng rng = make_rng(3, 9);
  for (int i = 0; i < 40; ++i) {
    const Request req{"OP", static_cast<std::uint32_t>(i + 1), {{static_cast<std::uint8_t>(i)}}};
    const auto& src = i % 2 ? victim : other;
    PoisonPlan plan{choose_poison_mask(10, 5, rng), 0.08, 0.2, 1.0};
    const auto tok = build_token(src, req, be.mapping(), plan, rng).token;
    const auto res = be.score(victim.device_id, req, tok);
    for (std::uint32_t a = 1; a <= 5; ++a) {
      const bool accept = res.matched >= a;
      if (a > 1 && !(res.matched >= a - 1)) CHECK_FALSE(accept);
    }
    CHECK(res.accepted() == (res.matched >= be.auth().accept_num));
  }
}

TEST_CASE("no nonce is ever accepted twice under random interleavings") {
  auto bed = test::small_bed();
  Backend& be = bed->backend();
  const auto& dev = bed->devices()[2];
  Rng rng = make_rng(99, 1);
  std::vector<std::pair<Request, Token>> sent;
  std::set<std::uint32_t> accepted;
  std::uint32_t next = 1;
  for (int step = 0; step < 200; ++step) {
    Request req;
    Token tok;
    const auto pick = rng() % 3;
    if (pick == 0 || sent.empty()) {
      req = {"OP", next++, {{1}}};
      PoisonPlan plan{choose_poison_mask(10, 5, rng), 0.08, 0.2, 1.0};
      tok = build_token(dev, req, be.mapping(), plan, rng).token;
      sent.emplace_back(req, tok);
    } else if (pick == 1) {
      std::tie(req, tok) = sent[rng() % sent.size()];
    } else {
      // arbitrary nonce, possibly stale
      req = {"OP", static_cast<std::uint32_t>(rng() % (next + 3)), {{1}}};
      PoisonPlan plan{choose_poison_mask(10, 5, rng), 0.08, 0.2, 1.0};
      tok = build_token(dev, req, be.mapping(), plan, rng).token;
    }
    if (be.authenticate(dev.device_id, req, tok).accepted()) {
      CHECK(accepted.insert(req.nonce).second);
      CHECK(*accepted.rbegin() == req.nonce);
    }
  }
  CHECK(accepted.size() > 10);
}

TEST_CASE("concurrent authentication across devices") {
  auto bed = test::small_bed();
  Backend& be = bed->backend();
  std::vector<std::thread> threads;
  std::vector<int> accepted(bed->devices().size(), 0);
  for (std::size_t d = 0; d < bed->devices().size(); ++d) {
    threads.emplace_back([&, d] {
      const auto& dev = bed->devices()[d];
      Client client(dev, be.auth(), be.mapping());
      Rng rng = make_rng(50, d);
      for (int i = 0; i < 30; ++i) {
        const auto req = client.next_request("PING", {{static_cast<std::uint8_t>(i)}});
        const auto tok = client.generate_token(req, rng).token;
        accepted[d] += be.authenticate(dev.device_id, req, tok).accepted();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (std::size_t d = 0; d < accepted.size(); ++d) {
    CHECK(accepted[d] >= 27);
    CHECK(be.last_seen_nonce(bed->devices()[d].device_id) >= 27);
  }
}

TEST_CASE("snapshot restore preserves decisions and replay state") {
  auto bed = test::small_bed();
  Backend& be = bed->backend();
  const auto& dev = bed->devices()[1];
  Client client(dev, be.auth(), be.mapping());
  Rng rng = make_rng(12, 12);
  const auto r1 = client.next_request("A", {{1}});
  const auto t1 = client.generate_token(r1, rng).token;
  REQUIRE(be.authenticate(dev.device_id, r1, t1).accepted());

  const auto path = (std::filesystem::temp_directory_path() / "hwfp_backend_snapshot.json").string();
  save_snapshot(be, path);
  auto restored = load_snapshot(path);
  std::filesystem::remove(path);

  CHECK(restored->last_seen_nonce(dev.device_id) == 1);
  CHECK(restored->authenticate(dev.device_id, r1, t1).reason == Reason::ReplayDetected);
  Rng probe = make_rng(13, 13);
  for (int i = 0; i < 20; ++i) {
    const Request req{"B", static_cast<std::uint32_t>(100 + i), {{2}}};
    PoisonPlan plan{choose_poison_mask(10, 5, probe), 0.08, 0.2, 1.0};
    const auto src = bed->devices()[static_cast<std::size_t>(i) % bed->devices().size()];
    const auto tok = build_token(src, req, be.mapping(), plan, probe).token;
    CHECK(restored->score(dev.device_id, req, tok) == be.score(dev.device_id, req, tok));
  }
  CHECK_THROWS_AS(load_snapshot("/nonexistent/snapshot.json"), Error);
}

TEST_CASE("config documents round-trip") {
  AuthConfig a;
  a.used_num = 7;
  a.noise_hi = 0.3;
  const auto a2 = auth_from_json(auth_to_json(a));
  CHECK(a2.used_num == 7);
  CHECK(a2.noise_hi == 0.3);
  MappingConfig m = mapping_for({Feature::RtcPha, Feature::Sram}, 8);
  const auto m2 = mapping_from_json(mapping_to_json(m));
  CHECK(m2.total_num == 8);
  CHECK(m2.enabled_specs == m.enabled_specs);
  BackendOptions o;
  o.analog_verifier = VerifierKind::LearnedClassifier;
  o.holdout = 0.25;
  const auto o2 = backend_options_from_json(backend_options_to_json(o));
  CHECK(o2.analog_verifier == VerifierKind::LearnedClassifier);
  CHECK(o2.holdout == 0.25);
  const TrainingPair p{{Feature::Sram, {3}}, FingerprintValue::bits32(77)};
  const auto p2 = pair_from_json(pair_to_json(p));
  CHECK(p2.task == p.task);
  CHECK(p2.fingerprint == p.fingerprint);
  CHECK(auth_from_json(nlohmann::json::object()).total_num == 10);
}
