#pragma once

#include <json.hpp>

#include "hwfp/backend.hpp"
#include "hwfp/client.hpp"
#include "hwfp/experiment.hpp"
#include "hwfp/hwsim.hpp"
#include "hwfp/mapping.hpp"

namespace hwfp {

nlohmann::json auth_to_json(const AuthConfig& c);
AuthConfig auth_from_json(const nlohmann::json& j);

nlohmann::json mapping_to_json(const MappingConfig& c);
MappingConfig mapping_from_json(const nlohmann::json& j);

nlohmann::json sim_to_json(const SimParams& s);
SimParams sim_from_json(const nlohmann::json& j);

nlohmann::json backend_options_to_json(const BackendOptions& o);
BackendOptions backend_options_from_json(const nlohmann::json& j);

nlohmann::json pair_to_json(const TrainingPair& p);
TrainingPair pair_from_json(const nlohmann::json& j);

// Run configuration file: {"version": 1, "model", "devices", "seed",
// "pairs_per_feature", "sim", "auth", "mapping", "backend"}. Every key but
// "version" is optional.
inline constexpr int kConfigVersion = 1;

nlohmann::json testbed_to_json(const TestbedConfig& c);
TestbedConfig testbed_from_json(const nlohmann::json& j);
TestbedConfig load_testbed_config(const std::string& path);

}  // namespace hwfp
