#pragma once

#include <array>
#include <cstdint>
#include <string_view>
#include <variant>
#include <vector>

#include "hwfp/mapping.hpp"
#include "hwfp/rng.hpp"

namespace hwfp {

// Analogues of ESP32S2 (A), STM32F103 (B) and STM32F429 (C). Only C has a
// hardware FPU.
enum class Model : std::uint8_t { A = 0, B, C };

std::string_view model_name(Model model);
Model parse_model(std::string_view name);

/// Either an analog reading or a 32-bit SRAM word.
class FingerprintValue {
 public:
  enum class Tag : std::uint8_t { Analog = 0, Bits32 = 1 };

  FingerprintValue() : value_(0.0) {}
  static FingerprintValue analog(double v) { return FingerprintValue(v); }
  static FingerprintValue bits32(std::uint32_t w) { return FingerprintValue(w); }

  Tag tag() const { return value_.index() == 0 ? Tag::Analog : Tag::Bits32; }
  bool is_analog() const { return value_.index() == 0; }
  double analog() const { return std::get<double>(value_); }
  std::uint32_t bits() const { return std::get<std::uint32_t>(value_); }

  friend bool operator==(const FingerprintValue&, const FingerprintValue&) = default;

 private:
  explicit FingerprintValue(double v) : value_(v) {}
  explicit FingerprintValue(std::uint32_t w) : value_(w) {}
  std::variant<double, std::uint32_t> value_;
};

struct TrainingPair {
  HardwareTask task;
  FingerprintValue fingerprint;
};

struct SimParams {
  /// Relative measurement noise of analog features.
  double noise_sigma = 0.01;
  /// Per-device parameter spread divided by noise_sigma.
  double inter_ratio = 5.0;
  double sram_flip_prob = 0.01;
  /// Noise multiplier for FPU-mode tasks on models without an FPU.
  double soft_fpu_noise = 8.0;

  double inter_sigma() const { return inter_ratio * noise_sigma; }
};

struct DacAdcParams {
  double gain_dev = 0;
  std::array<double, 3> poly{};
  std::array<double, 4> pin_dev{};
  double vdd_dev = 0;
};

struct FpuParams {
  double perf_dev = 0;
  std::array<double, 2> mode_dev{};
  double x_slope = 0;
  double y_slope = 0;
};

struct PwmParams {
  double duty_err = 0;
  double volt_err = 0;
  std::array<double, 4> clock_dev{};
  double freq_slope = 0;
};

struct RtcFreParams {
  double skew = 0;
  std::array<double, 4> source_skew{};
  double div_slope = 0;
  double adj_slope = 0;
};

struct RtcPhaParams {
  double phase_off = 0;
  std::array<double, 4> source_phase{};
  double drift = 0;
};

struct SramParams {
  double flip_prob = 0.01;
};

struct DeviceProfile {
  std::uint16_t device_id = 0;
  Model model = Model::A;
  std::uint64_t secret_seed = 0;
  SimParams sim;
  DacAdcParams dacadc;
  FpuParams fpu;
  PwmParams pwm;
  RtcFreParams rtcfre;
  RtcPhaParams rtcpha;
  SramParams sram;

  /// Power-up word at an address index, derived from secret_seed.
  std::uint32_t sram_word(std::uint32_t address_index) const;
};

/// Nominal model-level constants (what a datasheet would tell you).
struct ModelTraits {
  double dac_gain;
  std::array<double, 4> dac_pin;
  double dac_vdd;
  std::array<double, 3> dac_poly;
  double dac_corrected;
  std::array<double, 2> fpu_cycles;
  bool hardware_fpu;
  std::array<double, 2> pwm_volt;
  std::array<double, 4> pwm_clock;
  std::array<double, 4> rtc_period;
  std::array<double, 4> rtc_source;
  double rtc_drift;
};

const ModelTraits& model_traits(Model model);

std::vector<DeviceProfile> spawn_fleet(Model model, std::uint32_t count,
                                       std::uint64_t seed,
                                       const SimParams& sim = {});

/// Proportional DAC -> ADC code mapping.
double ideal_dac_adc(std::int64_t v_dac, unsigned res_dac, unsigned res_adc);

/// Mandelbrot escape-iteration count for the FPU task's bounds.
double fpu_workload(std::uint32_t x_bound, std::uint32_t y_bound);

/// Public work amount implied by a task's arguments alone (periods measured,
/// ideal voltage, iteration count). Independent of device and model; 1 for
/// features without one.
double task_scale(const HardwareTask& task);

/// Noise-free response (no measurement noise, no SRAM flips).
FingerprintValue expected_response(const DeviceProfile& profile,
                                   const HardwareTask& task);

/// Measurement noise standard deviation for an analog task (0 for SRAM).
double noise_sd(const DeviceProfile& profile, const HardwareTask& task);

FingerprintValue execute_task(const DeviceProfile& profile,
                              const HardwareTask& task, Rng& rng);

/// SRAM enumerates the address space in order first; analog features draw
/// argument tuples uniformly.
std::vector<TrainingPair> collect_pairs(const DeviceProfile& profile,
                                        const TaskSpec& spec, std::size_t n,
                                        Rng& rng);

HardwareTask random_task(const TaskSpec& spec, Rng& rng);

}  // namespace hwfp
