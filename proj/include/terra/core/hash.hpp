#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace terra {

/// 64-bit FNV-1a over raw bytes.
uint64_t hash_bytes(std::span<const uint8_t> bytes, uint64_t seed = 0xcbf29ce484222325ULL);

inline uint64_t hash_string(std::string_view s) {
  return hash_bytes({reinterpret_cast<const uint8_t*>(s.data()), s.size()});
}

/// Lower-case, zero-padded 16-digit hex rendering.
std::string to_hex(uint64_t h);

}  // namespace terra
