#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "terra/raster/heightmap.hpp"

namespace terra::raster {

inline constexpr int kHgtSide = 3601;
inline constexpr size_t kHgtBytes = 2ull * kHgtSide * kHgtSide;
inline constexpr int16_t kHgtVoid = -32768;

/// A decoded 1 arc-second tile. Void samples read as 0 m in `heights` and are
/// flagged in `void_mask`.
struct HgtTile {
  Heightmap heights;
  std::vector<uint8_t> void_mask;
  int64_t void_count = 0;
};

/// Big-endian int16 samples, row-major from the northwest corner.
/// Throws FormatError on a wrong length or an all-void tile.
HgtTile parse_hgt(std::span<const uint8_t> bytes, double resolution_m = 30.0);

/// Inverse of parse_hgt: elevations rounded to integer meters; masked pixels
/// are written as the void value.
std::vector<uint8_t> write_hgt(const Heightmap& hm, std::span<const uint8_t> void_mask = {});

}  // namespace terra::raster
