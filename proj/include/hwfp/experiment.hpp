#pragma once

#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hwfp/attacks.hpp"
#include "hwfp/backend.hpp"
#include "hwfp/fleet_io.hpp"

namespace hwfp {

struct TprFpr {
  double tpr = 0;
  double fpr = 0;
};

/// (is_legit, accepted) pairs. DegenerateSample without both classes.
TprFpr compute_tpr_fpr(std::span<const std::pair<bool, bool>> outcomes);

/// Enrollment set for one device: `per_feature` pairs for every enabled
/// analog feature and max(per_feature, 3 x address space) SRAM reads.
std::vector<TrainingPair> enrollment_pairs(const DeviceProfile& device,
                                           const MappingConfig& mapping,
                                           std::size_t per_feature, Rng& rng);

struct TestbedConfig {
  Model model = Model::A;
  std::uint32_t devices = 10;
  std::uint64_t seed = 1;
  SimParams sim{};
  AuthConfig auth{};
  MappingConfig mapping = mapping_for({Feature::DacAdc, Feature::Pwm, Feature::RtcFre,
                                       Feature::Sram});
  std::size_t pairs_per_feature = 1000;
  BackendOptions backend{};
  Exec exec = Exec::Parallel;
};

// A fleet enrolled into a backend through the wire codec (in-process loopback).
class Testbed {
 public:
  static std::unique_ptr<Testbed> build(const TestbedConfig& config);

  const TestbedConfig& config() const { return config_; }
  Backend& backend() { return *backend_; }
  const Backend& backend() const { return *backend_; }
  const std::vector<DeviceProfile>& devices() const { return fleet_.devices; }
  const Fleet& fleet() const { return fleet_; }

 private:
  TestbedConfig config_;
  Fleet fleet_;
  std::unique_ptr<Backend> backend_;
};

/// Uploads every device first and then commits each, so that every commit
/// sees the other devices' pairs as negatives. Frames go through
/// handle_frame_bytes; any Error reply is thrown.
void enroll_loopback(Backend& backend, std::span<const DeviceProfile> devices,
                     std::size_t per_feature, std::uint64_t seed);

struct AuthTrial {
  std::uint32_t legit_matched = 0;
  std::uint32_t impostor_matched = 0;
};

/// Trial i: device i mod n sends a fresh token under `client_auth`; a
/// random other fleet device sends one claiming to be it. Both scored
/// without the replay guard.
std::vector<AuthTrial> run_auth_trials(const Testbed& bed, const AuthConfig& client_auth,
                                       std::size_t trials, std::uint64_t seed);

TprFpr rates_at(std::span<const AuthTrial> trials, std::uint32_t accept_num);

struct NoisePoint {
  double noise = 0;
  double poisoned_accept = 0;  // every entry poisoned
  double raw_accept = 0;       // every entry raw, same draws
};

/// At noise 0 the offset C is dropped too, so that point is the raw token.
std::vector<NoisePoint> noise_curve(const Testbed& bed, std::span<const double> noises,
                                    std::size_t trials, std::uint64_t seed);

struct MimicComparison {
  RateEstimate clean;                       // plain attacker, unpoisoned traffic
  std::array<RateEstimate, 4> poisoned;     // per strategy, default traffic
  double best_poisoned() const;
};

/// Equal raw-pair budget: `clean_tokens` of unpoisoned traffic versus
/// clean_tokens * total/used tokens of poisoned traffic, same victim.
MimicComparison compare_sw_mimic(const Testbed& bed, std::uint16_t victim_index,
                                 std::size_t clean_tokens, std::size_t trials,
                                 std::uint64_t seed);

enum class SweepAxis { Features, UsedNum, AcceptNum, Noise, TamperD, Strategy };

std::string_view axis_name(SweepAxis axis);
SweepAxis parse_axis(std::string_view name);

struct ExperimentSpec {
  std::string name = "experiment";
  TestbedConfig testbed{};
  SweepAxis axis = SweepAxis::UsedNum;
  /// Empty = the axis default.
  std::vector<double> values;
  std::size_t trials = 500;
  /// Tamper axis only.
  std::uint64_t tamper_budget = 100;
};

inline constexpr int kCsvSchema = 1;
std::string csv_header();

/// Deterministic for a given spec: equal specs give byte-identical CSV.
std::string run_experiment(const ExperimentSpec& spec);

}  // namespace hwfp
