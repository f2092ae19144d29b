#include <doctest.h>

#include <bit>
#include <cmath>
#include <set>

#include "hwfp/error.hpp"
#include "hwfp/fleet_io.hpp"
#include "hwfp/hwsim.hpp"

using namespace hwfp;

namespace {

double circular_gap(double a, double b) {
  double d = std::fmod(std::abs(a - b), 1.0);
  return std::min(d, 1.0 - d);
}

}  // namespace

TEST_CASE("ideal DAC to ADC mapping") {
  CHECK(ideal_dac_adc(255, 8, 12) == doctest::Approx(4095.0));
  CHECK(ideal_dac_adc(0, 8, 12) == 0.0);
  CHECK(ideal_dac_adc(128, 8, 8) == doctest::Approx(128.0));
  CHECK_THROWS_AS(ideal_dac_adc(256, 8, 12), Error);
  CHECK_THROWS_AS(ideal_dac_adc(-1, 8, 12), Error);
  CHECK_THROWS_AS(ideal_dac_adc(1, 0, 12), Error);
}

TEST_CASE("an ideal DAC/ADC device reports zero error") {
  DeviceProfile p;
  p.sim.noise_sigma = 0;
  Rng rng = make_rng(1, 1);
  for (std::uint32_t v : {0u, 17u, 255u}) {
    const HardwareTask t{Feature::DacAdc, {v, 1, 0, 2}};
    CHECK(execute_task(p, t, rng).analog() == 0.0);
  }
}

TEST_CASE("argument validation") {
  const auto fleet = spawn_fleet(Model::A, 1, 3);
  Rng rng = make_rng(1, 2);
  CHECK_THROWS_AS(execute_task(fleet[0], {Feature::Pwm, {0, 0}}, rng), Error);
  CHECK_THROWS_AS(execute_task(fleet[0], {Feature::Sram, {1024}}, rng), Error);
  CHECK_THROWS_AS(spawn_fleet(Model::A, 0, 1), Error);
  CHECK_THROWS_AS(parse_model("D"), Error);
}

TEST_CASE("seeded execution is reproducible") {
  const auto fleet = spawn_fleet(Model::B, 2, 8);
  CHECK(spawn_fleet(Model::B, 2, 8)[1].pwm.clock_dev == fleet[1].pwm.clock_dev);
  const HardwareTask t{Feature::RtcFre, {1, 2, 3, 4}};
  Rng a = make_rng(5, 5), b = make_rng(5, 5);
  CHECK(execute_task(fleet[0], t, a) == execute_task(fleet[0], t, b));
}

TEST_CASE("SRAM flips bits at the configured rate") {
  auto fleet = spawn_fleet(Model::A, 1, 4);
  Rng rng = make_rng(2, 2);
  std::size_t flips = 0;
  const int reads = 4000;
  for (int i = 0; i < reads; ++i) {
    const std::uint32_t a = static_cast<std::uint32_t>(i % 1024);
    flips += std::popcount(execute_task(fleet[0], {Feature::Sram, {a}}, rng).bits() ^
                           fleet[0].sram_word(a));
  }
  const double rate = static_cast<double>(flips) / (32.0 * reads);
  CHECK(rate == doctest::Approx(0.01).epsilon(0.15));
  fleet[0].sram.flip_prob = 0;
  CHECK(execute_task(fleet[0], {Feature::Sram, {5}}, rng).bits() == fleet[0].sram_word(5));
}

TEST_CASE("per-device spread dominates measurement noise") {
  const SimParams sim;
  CHECK(sim.inter_sigma() >= 5 * sim.noise_sigma);
  const auto fleet = spawn_fleet(Model::A, 400, 9);
  double sum = 0, sq = 0;
  for (const auto& d : fleet) {
    sum += d.pwm.duty_err;
    sq += d.pwm.duty_err * d.pwm.duty_err;
  }
  const double sd = std::sqrt(sq / fleet.size() - (sum / fleet.size()) * (sum / fleet.size()));
  CHECK(sd >= 5 * sim.noise_sigma * 0.85);
}

TEST_CASE("same-model devices are distinguishable at random arguments") {
  const auto fleet = spawn_fleet(Model::A, 10, 21);
  Rng rng = make_rng(21, 7);
  for (auto f : {Feature::DacAdc, Feature::Fpu, Feature::Pwm, Feature::RtcFre, Feature::RtcPha}) {
    const auto spec = default_task_spec(f);
    int far = 0;
    const int n = 2000;
    for (int i = 0; i < n; ++i) {
      const auto a = rng() % fleet.size();
      auto b = rng() % fleet.size();
      if (b == a) b = (b + 1) % fleet.size();
      const auto task = random_task(spec, rng);
      const double va = expected_response(fleet[a], task).analog();
      const double vb = expected_response(fleet[b], task).analog();
      const double gap = f == Feature::RtcPha ? circular_gap(va, vb) : std::abs(va - vb);
      far += gap > 2 * noise_sd(fleet[a], task);
    }
    CAPTURE(feature_name(f));
    // Fpu separation rests on the bare inter/intra ratio of 5: a gap of
    // N(0, 50 sigma^2) exceeds 2 sigma about 78% of the time.
    CHECK(far >= n * (f == Feature::Fpu ? 7 : 9) / 10);
  }
}

TEST_CASE("models differ grossly") {
  // per-source skew is wide, so compare model averages rather than one pair
  const auto a = spawn_fleet(Model::A, 20, 1);
  const auto c = spawn_fleet(Model::C, 20, 1);
  for (std::uint32_t src = 0; src < 4; ++src) {
    const HardwareTask t{Feature::RtcFre, {src, 3, 4, 5}};
    double va = 0, vc = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      va += expected_response(a[i], t).analog();
      vc += expected_response(c[i], t).analog();
    }
    CAPTURE(src);
    CHECK(std::abs(va - vc) / std::abs(va) > 0.3);
  }
}

TEST_CASE("soft float is noisier than hardware float") {
  const auto a = spawn_fleet(Model::A, 1, 2)[0];
  const auto c = spawn_fleet(Model::C, 1, 2)[0];
  const HardwareTask soft{Feature::Fpu, {1, 20, 20}};
  const double ra = noise_sd(a, soft) / expected_response(a, soft).analog();
  const double rc = noise_sd(c, soft) / expected_response(c, soft).analog();
  CHECK(ra > 4 * rc);
}

TEST_CASE("collect_pairs enumerates SRAM before sampling") {
  const auto d = spawn_fleet(Model::A, 1, 6)[0];
  Rng rng = make_rng(6, 6);
  const auto pairs = collect_pairs(d, default_task_spec(Feature::Sram), 1024, rng);
  std::set<std::uint32_t> addr;
  for (const auto& p : pairs) addr.insert(p.task.args[0]);
  CHECK(addr.size() == 1024);
  const auto pwm = collect_pairs(d, default_task_spec(Feature::Pwm), 50, rng);
  CHECK(pwm.size() == 50);
  for (const auto& p : pwm) CHECK(p.fingerprint.is_analog());
}

TEST_CASE("task_scale depends on arguments only") {
  const HardwareTask t{Feature::Pwm, {1, 2, 3, 1, 1}};
  CHECK(task_scale(t) == doctest::Approx(4 * 0.7));
  CHECK(task_scale({Feature::RtcPha, {0, 0, 0}}) == 1.0);
  CHECK(fpu_workload(31, 31) > fpu_workload(0, 0));
}

TEST_CASE("fleet files round-trip") {
  const auto fleet = make_fleet(Model::C, 3, 44);
  const auto back = fleet_from_json(fleet_to_json(fleet));
  REQUIRE(back.devices.size() == 3);
  CHECK(back.model == Model::C);
  CHECK(back.devices[2].secret_seed == fleet.devices[2].secret_seed);
  const HardwareTask t{Feature::DacAdc, {12, 0, 1, 3}};
  CHECK(expected_response(back.devices[1], t) == expected_response(fleet.devices[1], t));
  CHECK_THROWS_AS(fleet_from_json("{\"version\": 99}"), Error);
}
