#pragma once

#include <cstddef>
#include <string>
#include <vector>

// Byte-exact replays of the frozen vectors under tests/vectors, shared by
// the unit suite and the acceptance binary.
namespace hwfp::golden {

struct Report {
  std::size_t checked = 0;
  std::vector<std::string> failures;

  bool ok() const { return checked > 0 && failures.empty(); }
  void merge(const Report& other);
};

Report check_aphash(const std::string& dir);
Report check_divide(const std::string& dir);
/// Also requires the UNLOCK / nonce 1 / [01, 02] row to be present.
Report check_mapping(const std::string& dir);
Report check_tokens(const std::string& dir);
Report check_frames(const std::string& dir);
Report check_all(const std::string& dir);

}  // namespace hwfp::golden
