#pragma once

#include <memory>
#include <string>

#include "hwfp/backend.hpp"

namespace hwfp {

inline constexpr int kSnapshotVersion = 1;

/// Writes to a temporary file first so a crash never leaves half a snapshot.
void save_snapshot(const Backend& backend, const std::string& path);
std::unique_ptr<Backend> load_snapshot(const std::string& path);

}  // namespace hwfp
