#pragma once

#include <string>
#include <vector>

#include "hwfp/hwsim.hpp"

namespace hwfp {

inline constexpr int kFleetFormatVersion = 1;

struct Fleet {
  Model model = Model::A;
  std::uint32_t count = 0;
  std::uint64_t seed = 0;
  SimParams sim;
  std::vector<DeviceProfile> devices;
};

Fleet make_fleet(Model model, std::uint32_t count, std::uint64_t seed,
                 const SimParams& sim = {});

std::string fleet_to_json(const Fleet& fleet);
Fleet fleet_from_json(const std::string& text);

void save_fleet(const Fleet& fleet, const std::string& path);
Fleet load_fleet(const std::string& path);

}  // namespace hwfp
