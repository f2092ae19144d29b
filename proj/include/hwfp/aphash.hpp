#pragma once

#include <cstdint>
#include <span>
#include <string_view>

namespace hwfp {

/// Arash Partow's AP hash over raw bytes. Bit-exact with the reference C
/// implementation for inputs whose bytes are < 0x80; bytes are treated as
/// unsigned here.
std::uint32_t ap_hash(std::span<const std::uint8_t> input);

inline std::uint32_t ap_hash(std::string_view text) {
  return ap_hash(std::span<const std::uint8_t>(
      reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

}  // namespace hwfp
