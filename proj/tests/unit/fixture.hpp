#pragma once

#include <memory>

#include "hwfp/error.hpp"
#include "hwfp/experiment.hpp"

namespace hwfp::test {

// Small but fully enrolled fleet; cheap enough to rebuild per test case.
inline TestbedConfig small_config(std::uint64_t seed = 5) {
  TestbedConfig cfg;
  cfg.devices = 4;
  cfg.seed = seed;
  cfg.pairs_per_feature = 400;
  return cfg;
}

inline std::unique_ptr<Testbed> small_bed(std::uint64_t seed = 5) {
  return Testbed::build(small_config(seed));
}

}  // namespace hwfp::test
