#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace hwfp {

using Bytes = std::vector<std::uint8_t>;

enum class Feature : std::uint8_t { DacAdc = 0, Fpu, Pwm, RtcFre, RtcPha, Sram };

inline constexpr std::array<Feature, 6> kAllFeatures = {
    Feature::DacAdc, Feature::Fpu,    Feature::Pwm,
    Feature::RtcFre, Feature::RtcPha, Feature::Sram};

std::string_view feature_name(Feature feature);
Feature parse_feature(std::string_view name);
/// Number of argument slots the task design gives each feature.
std::size_t feature_arity(Feature feature);

struct TaskSpec {
  Feature feature = Feature::Sram;
  std::vector<std::uint32_t> arg_radices;

  /// Number of distinct argument tuples.
  std::uint64_t size() const;
  void validate() const;

  friend bool operator==(const TaskSpec&, const TaskSpec&) = default;
};

/// Calibrated radices (sum over all six is 15,360).
TaskSpec default_task_spec(Feature feature);
std::vector<TaskSpec> default_task_specs();

struct HardwareTask {
  Feature feature = Feature::Sram;
  std::vector<std::uint32_t> args;

  friend auto operator<=>(const HardwareTask&, const HardwareTask&) = default;
};

std::string format_task(const HardwareTask& task);

struct Request {
  std::string operation;
  std::uint32_t nonce = 0;
  std::vector<Bytes> payloads;

  static constexpr std::size_t kMaxOperation = 64;
  static constexpr std::size_t kMaxPayloads = 16;
  static constexpr std::size_t kMaxPayloadBytes = 256;

  void validate() const;

  friend bool operator==(const Request&, const Request&) = default;
};

// Ablation variants exist for the tampering study only; the backend refuses
// anything but Full.
enum class MappingVariant : std::uint8_t { Full = 0, H1Only, H3Only, H1H2 };

std::string_view variant_name(MappingVariant variant);
MappingVariant parse_variant(std::string_view name);

struct MappingConfig {
  std::uint32_t total_num = 10;
  std::vector<TaskSpec> enabled_specs = default_task_specs();
  MappingVariant variant = MappingVariant::Full;

  void validate() const;
  /// Index into enabled_specs for a feature, or -1.
  int spec_index(Feature feature) const;
};

/// Mapping config restricted to the given features with default radices.
MappingConfig mapping_for(std::initializer_list<Feature> features,
                          std::uint32_t total_num = 10);

/// Running digest after every round, before argument division.
std::vector<std::uint32_t> map_message_digests(const Request& request,
                                               const MappingConfig& config);

std::vector<HardwareTask> map_message(const Request& request,
                                      const MappingConfig& config);

HardwareTask divide_arguments(std::uint32_t digest, const MappingConfig& config);

std::uint64_t task_space_size(const MappingConfig& config);

// Index of a task within its spec's argument space (mixed radix, first
// argument least significant).
std::uint64_t task_ordinal(const HardwareTask& task, const TaskSpec& spec);
HardwareTask task_from_ordinal(std::uint64_t ordinal, const TaskSpec& spec);

}  // namespace hwfp
