#include "hwfp/hwsim.hpp"

#include <bit>
#include <cmath>
#include <mutex>

#include "hwfp/error.hpp"

namespace hwfp {

namespace {

// Maps k in [0, n) onto [-1, 1].
double centered(std::uint32_t k, std::uint32_t n) {
  return n > 1 ? 2.0 * k / (n - 1) - 1.0 : 0.0;
}

double frac(double x) { return x - std::floor(x); }

constexpr std::array<ModelTraits, 3> kTraits = {{
    // A: soft-float, large DAC/ADC gain error.
    {0.080, {0.0, 0.3, -0.2, 0.5}, 0.25, {0.10, 0.04, 0.0}, 0.55,
     {2.4, 2.4}, false,
     {2900.0, 3550.0}, {0.0, 0.15, -0.1, 0.3},
     {2500.0, 640.0, 8000.0, 320.0}, {0.0, 0.12, -0.08, 0.2}, 0.0137},
    // B: soft-float, slow core.
    {0.150, {0.1, -0.3, 0.2, -0.1}, -0.2, {-0.15, 0.06, 0.02}, 0.7,
     {3.9, 3.9}, false,
     {1700.0, 2050.0}, {0.1, -0.2, 0.05, 0.25},
     {4200.0, 1100.0, 13300.0, 540.0}, {0.05, -0.1, 0.15, 0.0}, 0.0291},
    // C: hardware FPU.
    {0.045, {-0.1, 0.2, 0.4, 0.0}, 0.35, {0.2, -0.05, 0.0}, 0.5,
     {1.3, 0.16}, true,
     {4700.0, 5400.0}, {-0.1, 0.2, 0.0, 0.1},
     {1400.0, 355.0, 4500.0, 180.0}, {0.1, 0.0, -0.12, 0.18}, 0.0071},
}};

void check_args(const HardwareTask& task) {
  const auto f = static_cast<std::uint8_t>(task.feature);
  if (f > static_cast<std::uint8_t>(Feature::Sram)) {
    throw Error(ErrorCode::UnknownFeature, "unknown feature id");
  }
  const TaskSpec spec = default_task_spec(task.feature);
  if (task.args.size() != spec.arg_radices.size()) {
    throw Error(ErrorCode::DomainError, "wrong argument count for " +
                                            std::string(feature_name(task.feature)));
  }
  for (std::size_t k = 0; k < task.args.size(); ++k) {
    if (task.args[k] >= spec.arg_radices[k]) {
      throw Error(ErrorCode::DomainError, "argument out of range for " +
                                              std::string(feature_name(task.feature)));
    }
  }
}

double analog_nominal(const DeviceProfile& p, const HardwareTask& task) {
  const ModelTraits& m = model_traits(p.model);
  const auto& a = task.args;
  switch (task.feature) {
    case Feature::DacAdc: {
      // Reference offset of 16 codes keeps the low end away from zero.
      const double ideal = ideal_dac_adc(a[0], 8, 12) + 16.0;
      const double x = centered(a[0], 256);
      const auto& d = p.dacadc;
      double shape = d.gain_dev + d.pin_dev[a[3]] + (a[1] ? d.vdd_dev : 0.0) +
                     d.poly[0] * x + d.poly[1] * x * x + d.poly[2] * x * x * x;
      if (a[2]) shape *= m.dac_corrected;
      return ideal * shape;
    }
    case Feature::Fpu: {
      const auto& d = p.fpu;
      const double unit =
          m.fpu_cycles[a[0]] * (1.0 + d.perf_dev + d.mode_dev[a[0]] +
                                d.x_slope * centered(a[1], 32) +
                                d.y_slope * centered(a[2], 32));
      return fpu_workload(a[1], a[2]) * unit;
    }
    case Feature::Pwm: {
      const auto& d = p.pwm;
      const double unit =
          m.pwm_volt[a[3]] *
          (1.0 + d.clock_dev[a[0]] + d.duty_err * centered(a[4], 2) +
           d.volt_err * centered(a[3], 2) + d.freq_slope * centered(a[1], 8));
      return task_scale(task) * unit;
    }
    case Feature::RtcFre: {
      const auto& d = p.rtcfre;
      const double adjusted = m.rtc_period[a[0]] * (1.0 + 0.003 * (a[2] - 7.5));
      const double unit =
          adjusted * (1.0 + d.skew + d.source_skew[a[0]] +
                      d.div_slope * centered(a[1], 8) +
                      d.adj_slope * centered(a[2], 16));
      return task_scale(task) * unit;
    }
    case Feature::RtcPha: {
      const auto& d = p.rtcpha;
      return frac(d.phase_off + d.source_phase[a[0]] +
                  d.drift * (a[1] + 1.0) * (a[2] + 1.0));
    }
    case Feature::Sram:
      break;
  }
  throw Error(ErrorCode::UnknownFeature, "not an analog feature");
}

}  // namespace

std::string_view model_name(Model model) {
  switch (model) {
    case Model::A: return "A";
    case Model::B: return "B";
    case Model::C: return "C";
  }
  return "?";
}

Model parse_model(std::string_view name) {
  if (name == "A" || name == "ModelA") return Model::A;
  if (name == "B" || name == "ModelB") return Model::B;
  if (name == "C" || name == "ModelC") return Model::C;
  throw Error(ErrorCode::InvalidArgument, "unknown model '" + std::string(name) + "'");
}

const ModelTraits& model_traits(Model model) {
  return kTraits.at(static_cast<std::size_t>(model));
}

std::uint32_t DeviceProfile::sram_word(std::uint32_t address_index) const {
  return static_cast<std::uint32_t>(
      splitmix64(secret_seed ^ splitmix64(0x5352414D00000000ULL + address_index)));
}

std::vector<DeviceProfile> spawn_fleet(Model model, std::uint32_t count,
                                       std::uint64_t seed, const SimParams& sim) {
  if (count < 1 || count > 9999) {
    throw Error(ErrorCode::RangeError, "fleet count must be in [1, 9999]");
  }
  const ModelTraits& m = model_traits(model);
  const double s = sim.inter_sigma();
  // Discrete per-setting offsets dominate the device-to-device spread.
  constexpr double kMain = 4.0;
  std::vector<DeviceProfile> fleet;
  fleet.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    Rng rng = make_rng(seed, static_cast<std::uint64_t>(model) + 1, i);
    std::normal_distribution<double> unit(0.0, 1.0);
    auto draw = [&](double mean, double sd) { return mean + sd * unit(rng); };

    DeviceProfile p;
    p.device_id = static_cast<std::uint16_t>(static_cast<unsigned>(model) * 10000 + i + 1);
    p.model = model;
    p.secret_seed = rng();
    p.sim = sim;

    const double g = m.dac_gain;
    p.dacadc.gain_dev = draw(g, s * g);
    const std::array<double, 3> poly_w = {1.0, 0.3, 0.1};
    for (int k = 0; k < 3; ++k) p.dacadc.poly[k] = draw(g * m.dac_poly[k], s * g * poly_w[k]);
    for (int k = 0; k < 4; ++k) p.dacadc.pin_dev[k] = draw(g * m.dac_pin[k], kMain * s * g);
    p.dacadc.vdd_dev = draw(g * m.dac_vdd, s * g);

    p.fpu.perf_dev = draw(0.0, s);
    for (auto& v : p.fpu.mode_dev) v = draw(0.0, kMain * s);
    p.fpu.x_slope = draw(0.0, s);
    p.fpu.y_slope = draw(0.0, s);

    p.pwm.duty_err = draw(0.0, s);
    p.pwm.volt_err = draw(0.0, s);
    for (int k = 0; k < 4; ++k) p.pwm.clock_dev[k] = draw(m.pwm_clock[k], kMain * s);
    p.pwm.freq_slope = draw(0.0, s);

    p.rtcfre.skew = draw(0.0, s);
    for (int k = 0; k < 4; ++k) p.rtcfre.source_skew[k] = draw(m.rtc_source[k], kMain * s);
    p.rtcfre.div_slope = draw(0.0, s);
    p.rtcfre.adj_slope = draw(0.0, s);

    p.rtcpha.phase_off = uniform01(rng);
    for (auto& v : p.rtcpha.source_phase) v = uniform01(rng);
    p.rtcpha.drift = draw(m.rtc_drift, s * m.rtc_drift);

    p.sram.flip_prob = sim.sram_flip_prob;
    fleet.push_back(p);
  }
  return fleet;
}

double ideal_dac_adc(std::int64_t v_dac, unsigned res_dac, unsigned res_adc) {
  if (res_dac == 0 || res_dac > 32 || res_adc > 32) {
    throw Error(ErrorCode::DomainError, "resolution out of range");
  }
  const double dac_max = std::ldexp(1.0, static_cast<int>(res_dac)) - 1.0;
  const double adc_max = std::ldexp(1.0, static_cast<int>(res_adc)) - 1.0;
  if (v_dac < 0 || static_cast<double>(v_dac) > dac_max) {
    throw Error(ErrorCode::DomainError, "DAC code out of range");
  }
  return static_cast<double>(v_dac) * adc_max / dac_max;
}

double fpu_workload(std::uint32_t x_bound, std::uint32_t y_bound) {
  static std::once_flag once;
  static std::array<double, 32 * 32> table{};
  std::call_once(once, [] {
    constexpr int kGrid = 8;
    constexpr int kMaxIter = 32;
    for (int xb = 0; xb < 32; ++xb) {
      for (int yb = 0; yb < 32; ++yb) {
        const double x_hi = -2.0 + 2.5 * (xb + 1) / 32.0;
        const double y_hi = 1.25 * (yb + 1) / 32.0;
        double total = 0;
        for (int i = 0; i < kGrid; ++i) {
          for (int j = 0; j < kGrid; ++j) {
            const double cr = -2.0 + (x_hi + 2.0) * (i + 0.5) / kGrid;
            const double ci = y_hi * (j + 0.5) / kGrid;
            double zr = 0, zi = 0;
            int it = 0;
            while (it < kMaxIter && zr * zr + zi * zi <= 4.0) {
              const double t = zr * zr - zi * zi + cr;
              zi = 2.0 * zr * zi + ci;
              zr = t;
              ++it;
            }
            total += it;
          }
        }
        table[xb * 32 + yb] = total;
      }
    }
  });
  if (x_bound >= 32 || y_bound >= 32) {
    throw Error(ErrorCode::DomainError, "Mandelbrot bound out of range");
  }
  return table[x_bound * 32 + y_bound];
}

double task_scale(const HardwareTask& task) {
  const auto& a = task.args;
  switch (task.feature) {
    case Feature::DacAdc:
      return ideal_dac_adc(a.at(0), 8, 12) + 16.0;
    case Feature::Fpu:
      return fpu_workload(a.at(1), a.at(2));
    case Feature::Pwm:
      return (a.at(2) + 1.0) * (a.at(4) ? 0.7 : 0.3);
    case Feature::RtcFre:
      return (a.at(3) + 1.0) * (a.at(1) + 1.0);
    case Feature::RtcPha:
    case Feature::Sram:
      return 1.0;
  }
  throw Error(ErrorCode::UnknownFeature, "unknown feature id");
}

FingerprintValue expected_response(const DeviceProfile& profile,
                                   const HardwareTask& task) {
  check_args(task);
  if (task.feature == Feature::Sram) {
    return FingerprintValue::bits32(profile.sram_word(task.args[0]));
  }
  return FingerprintValue::analog(analog_nominal(profile, task));
}

double noise_sd(const DeviceProfile& profile, const HardwareTask& task) {
  check_args(task);
  const double sigma = profile.sim.noise_sigma;
  switch (task.feature) {
    case Feature::DacAdc:
      return sigma * std::abs(analog_nominal(profile, task));
    case Feature::Fpu: {
      const bool soft = task.args[0] == 1 && !model_traits(profile.model).hardware_fpu;
      return sigma * (soft ? profile.sim.soft_fpu_noise : 1.0) *
             std::abs(analog_nominal(profile, task));
    }
    case Feature::Pwm:
    case Feature::RtcFre:
      return sigma * std::abs(analog_nominal(profile, task));
    case Feature::RtcPha:
      return sigma;
    case Feature::Sram:
      return 0.0;
  }
  return 0.0;
}

FingerprintValue execute_task(const DeviceProfile& profile,
                              const HardwareTask& task, Rng& rng) {
  check_args(task);
  if (task.feature == Feature::Sram) {
    std::uint32_t word = profile.sram_word(task.args[0]);
    const double p = profile.sram.flip_prob;
    if (p > 0) {
      std::bernoulli_distribution flip(p);
      for (int b = 0; b < 32; ++b) {
        if (flip(rng)) word ^= (1u << b);
      }
    }
    return FingerprintValue::bits32(word);
  }
  const double nominal = analog_nominal(profile, task);
  const double sd = noise_sd(profile, task);
  const double noise = sd > 0 ? std::normal_distribution<double>(0.0, sd)(rng) : 0.0;
  if (task.feature == Feature::RtcPha) {
    return FingerprintValue::analog(frac(nominal + noise));
  }
  return FingerprintValue::analog(nominal + noise);
}

HardwareTask random_task(const TaskSpec& spec, Rng& rng) {
  HardwareTask task;
  task.feature = spec.feature;
  for (auto radix : spec.arg_radices) {
    task.args.push_back(
        std::uniform_int_distribution<std::uint32_t>(0, radix - 1)(rng));
  }
  return task;
}

std::vector<TrainingPair> collect_pairs(const DeviceProfile& profile,
                                        const TaskSpec& spec, std::size_t n,
                                        Rng& rng) {
  if (n < 1) throw Error(ErrorCode::RangeError, "collect_pairs needs n >= 1");
  spec.validate();
  std::vector<TrainingPair> pairs;
  pairs.reserve(n);
  if (spec.feature == Feature::Sram) {
    const std::uint64_t space = spec.size();
    for (std::size_t i = 0; i < n; ++i) {
      HardwareTask task = task_from_ordinal(i % space, spec);
      auto fp = execute_task(profile, task, rng);
      pairs.push_back({std::move(task), fp});
    }
    return pairs;
  }
  for (std::size_t i = 0; i < n; ++i) {
    HardwareTask task = random_task(spec, rng);
    auto fp = execute_task(profile, task, rng);
    pairs.push_back({std::move(task), fp});
  }
  return pairs;
}

}  // namespace hwfp
