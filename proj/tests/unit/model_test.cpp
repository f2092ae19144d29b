#include <doctest.h>

#include <cmath>

#include "hwfp/error.hpp"
#include "hwfp/forest.hpp"
#include "hwfp/hwsim.hpp"
#include "hwfp/predictor.hpp"

using namespace hwfp;

namespace {

Dataset smooth(std::size_t n, std::uint64_t seed) {
  Rng rng = make_rng(seed, 1);
  Dataset d;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = uniform01(rng), b = uniform01(rng);
    const double feat[2] = {a, b};
    d.add(feat, 3 * a + std::sin(3 * b));
  }
  return d;
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error thrown");
  return ErrorCode::Io;
}

}  // namespace

TEST_CASE("serial and parallel forests are identical") {
  const Dataset d = smooth(600, 2);
  const ForestParams p{30, 4, 77};
  const auto serial = ExtraTrees::fit(d, p, Exec::Serial);
  const auto parallel = ExtraTrees::fit(d, p, Exec::Parallel);
  CHECK(serial == parallel);
  CHECK(serial.tree_count() == 30);
  const auto other = ExtraTrees::fit(d, {30, 4, 78}, Exec::Serial);
  CHECK_FALSE(serial == other);
}

TEST_CASE("forest regression error is small on a smooth target") {
  const auto f = ExtraTrees::fit(smooth(2000, 3), {50, 4, 1});
  const Dataset test = smooth(300, 4);
  double err = 0;
  for (std::size_t i = 0; i < test.rows(); ++i) err += std::abs(f.predict(test.row(i)) - test.y[i]);
  CHECK(err / test.rows() < 0.1);
}

TEST_CASE("forest and knn serialise losslessly") {
  const Dataset d = smooth(200, 5);
  const auto f = ExtraTrees::fit(d, {10, 4, 2});
  const auto g = ExtraTrees::from_json(f.to_json());
  CHECK(f == g);
  const auto k = KnnRegressor::fit(d, {5});
  const auto k2 = KnnRegressor::from_json(k.to_json());
  for (std::size_t i = 0; i < 20; ++i) {
    CHECK(f.predict(d.row(i)) == g.predict(d.row(i)));
    CHECK(k.predict(d.row(i)) == k2.predict(d.row(i)));
  }
  auto broken = f.to_json();
  broken["trees"][0]["left"][0] = 100000;
  CHECK_THROWS_AS(ExtraTrees::from_json(broken), Error);
}

TEST_CASE("knn averages exact hits and weights by distance otherwise") {
  Dataset d;
  const double p0[1] = {0.0}, p1[1] = {1.0};
  d.add(p0, 2.0);
  d.add(p0, 4.0);
  d.add(p1, 10.0);
  const auto k = KnnRegressor::fit(d, {2});
  CHECK(k.predict(p0) == doctest::Approx(3.0));
  const double q[1] = {0.75};
  const double v = k.predict(q);
  CHECK(v > 4.0);
  CHECK(v < 10.0);
}

TEST_CASE("majority word keeps the first read on ties") {
  const std::uint32_t reads[] = {0b1010, 0b0110};
  CHECK(majority_word(reads) == 0b1010u);
  const std::uint32_t three[] = {0b1100, 0b1010, 0b1001};
  CHECK(majority_word(three) == 0b1000u);
}

TEST_CASE("predictor preconditions") {
  const auto dev = spawn_fleet(Model::A, 1, 3)[0];
  Rng rng = make_rng(3, 3);
  const auto sram_spec = default_task_spec(Feature::Sram);
  const auto pwm_spec = default_task_spec(Feature::Pwm);
  const auto sram = collect_pairs(dev, sram_spec, 1024, rng);
  const auto pwm = collect_pairs(dev, pwm_spec, 200, rng);

  CHECK(code_of([&] { train_predictor(sram, sram_spec, PredictorKind::RandomizedTreeEnsemble); }) ==
        ErrorCode::InvalidArgument);
  CHECK(code_of([&] { train_predictor(pwm, pwm_spec, PredictorKind::ExactTable); }) ==
        ErrorCode::InvalidArgument);
  CHECK(code_of([&] {
          train_predictor(std::span(sram).first(1000), sram_spec, PredictorKind::ExactTable);
        }) == ErrorCode::IncompleteCoverage);
  auto wrong_tag = pwm;
  wrong_tag[3].fingerprint = FingerprintValue::bits32(1);
  CHECK(code_of([&] { train_predictor(wrong_tag, pwm_spec, PredictorKind::NearestNeighbor); }) ==
        ErrorCode::TagMismatch);

  const auto table = train_predictor(sram, sram_spec, PredictorKind::ExactTable);
  CHECK(table.predict({Feature::Sram, {5}}).bits() == majority_word(std::vector{sram[5].fingerprint.bits()}));
  CHECK(code_of([&] { table.predict({Feature::Sram, {4096}}); }) == ErrorCode::UnseenAddress);
}

TEST_CASE("trained predictors track the simulator") {
  const auto dev = spawn_fleet(Model::A, 1, 12)[0];
  Rng rng = make_rng(12, 1);
  for (auto f : {Feature::DacAdc, Feature::Pwm, Feature::RtcFre}) {
    const auto spec = default_task_spec(f);
    const auto pairs = collect_pairs(dev, spec, 1000, rng);
    for (auto kind : {PredictorKind::RandomizedTreeEnsemble, PredictorKind::NearestNeighbor}) {
      const auto p = train_predictor(pairs, spec, kind, {5, 50, 4, 9});
      const auto back = Predictor::from_json(p.to_json());
      double err = 0;
      const int n = 300;
      for (int i = 0; i < n; ++i) {
        const auto t = random_task(spec, rng);
        const double truth = expected_response(dev, t).analog();
        const double pred = p.predict(t).analog();
        CHECK(back.predict(t).analog() == pred);
        err += std::abs(pred - truth) / std::abs(truth);
      }
      CAPTURE(feature_name(f));
      CAPTURE(predictor_kind_name(kind));
      CHECK(err / n < 0.05);
    }
  }
}

TEST_CASE("relative error with floor and wrap-around") {
  CHECK(relative_error(100, 110, 1) == doctest::Approx(0.1));
  CHECK(relative_error(0.5, 1.5, 10) == doctest::Approx(0.1));
  CHECK(relative_error(0.98, 0.02, 1, true) == doctest::Approx(0.04));
  CHECK(relative_error(-100, -90, 1) == doctest::Approx(0.1));
}

TEST_CASE("relative deviation of a linearly poisoned response") {
  Rng rng = make_rng(31, 31);
  for (int i = 0; i < 200; ++i) {
    const double a = 1 + 9 * uniform01(rng), b = 1 + 9 * uniform01(rng), x = uniform01(rng) * 10;
    const double c = 1 + 0.3 * uniform01(rng), d = 5 * uniform01(rng);
    const double y = a * x + b, y2 = c * y + d;
    const double delta = (c - 1) + std::abs(d / y);
    CHECK(relative_error(y, y2, 1e-12) == doctest::Approx(delta).epsilon(1e-9));
    const double tau = 0.2;
    CHECK(verify_one(Verifier::relative(tau, 1e-12), FingerprintValue::analog(y),
                     FingerprintValue::analog(y2)) == (delta <= tau));
  }
}

TEST_CASE("verifier calibration") {
  const auto fleet = spawn_fleet(Model::A, 2, 14);
  Rng rng = make_rng(14, 2);
  const auto spec = default_task_spec(Feature::Pwm);
  const auto own = collect_pairs(fleet[0], spec, 800, rng);
  const auto held = collect_pairs(fleet[0], spec, 400, rng);
  const auto other = collect_pairs(fleet[1], spec, 400, rng);
  const auto pred = train_predictor(own, spec, PredictorKind::RandomizedTreeEnsemble, {});

  CHECK(code_of([&] { calibrate_verifier(pred, held, {}, VerifierKind::RelativeErrorThreshold); }) ==
        ErrorCode::NoNegatives);
  CHECK(code_of([&] { calibrate_verifier(pred, held, other, VerifierKind::HammingThreshold); }) ==
        ErrorCode::InvalidArgument);

  const auto v = calibrate_verifier(pred, held, other, VerifierKind::RelativeErrorThreshold);
  CHECK(v.calibration().tpr >= 0.97);
  CHECK(v.calibration().fpr < 0.5);
  CHECK(v.tau() > 0);
  CHECK(v.floor() > 0);
  CHECK(code_of([&] {
          v.verify(FingerprintValue::bits32(1), FingerprintValue::analog(1));
        }) == ErrorCode::TagMismatch);

  const auto cls = calibrate_verifier(pred, held, other, VerifierKind::LearnedClassifier);
  CHECK(cls.calibration().tpr > 0.8);
  const auto back = Verifier::from_json(cls.to_json());
  for (int i = 0; i < 50; ++i) {
    CHECK(back.verify(pred.predict(other[i].task), other[i].fingerprint) ==
          cls.verify(pred.predict(other[i].task), other[i].fingerprint));
  }

  const Verifier h = Verifier::hamming(2);
  CHECK(h.verify(FingerprintValue::bits32(0b111), FingerprintValue::bits32(0b100)));
  CHECK_FALSE(h.verify(FingerprintValue::bits32(0b111), FingerprintValue::bits32(0)));
  CHECK_THROWS_AS(Verifier::relative(0, 1), Error);
}

TEST_CASE("hamming threshold is the smallest meeting the target") {
  const auto dev = spawn_fleet(Model::A, 2, 15);
  Rng rng = make_rng(15, 1);
  const auto spec = default_task_spec(Feature::Sram);
  const auto train = collect_pairs(dev[0], spec, 3072, rng);
  const auto pred = train_predictor(train, spec, PredictorKind::ExactTable);
  const auto held = collect_pairs(dev[0], spec, 1024, rng);
  const auto neg = collect_pairs(dev[1], spec, 200, rng);
  const auto v = calibrate_verifier(pred, held, neg, VerifierKind::HammingThreshold);
  CHECK(v.bits() >= 1);
  CHECK(v.bits() <= 3);
  VerifierOptions tight;
  tight.target_tpr = 0.5;
  CHECK(calibrate_verifier(pred, held, neg, VerifierKind::HammingThreshold, tight).bits() <= v.bits());
  CHECK(v.calibration().fpr == 0.0);
}
