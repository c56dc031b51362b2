#include "terra/raster/hgt.hpp"

#include <cmath>

namespace terra::raster {

HgtTile parse_hgt(std::span<const uint8_t> bytes, double resolution_m) {
  if (bytes.size() != kHgtBytes)
    throw FormatError("HGT tile must be " + std::to_string(kHgtBytes) + " bytes, got " + std::to_string(bytes.size()));
  HgtTile tile;
  const size_t n = static_cast<size_t>(kHgtSide) * kHgtSide;
  std::vector<float> values(n);
  tile.void_mask.assign(n, 0);
  for (size_t i = 0; i < n; ++i) {
    const auto raw = static_cast<int16_t>(static_cast<uint16_t>(bytes[2 * i] << 8 | bytes[2 * i + 1]));
    if (raw == kHgtVoid) {
      tile.void_mask[i] = 1;
      ++tile.void_count;
    } else {
      values[i] = static_cast<float>(raw);
    }
  }
  if (tile.void_count == static_cast<int64_t>(n)) throw FormatError("HGT tile is entirely void");
  tile.heights = Heightmap(kHgtSide, kHgtSide, std::move(values), resolution_m);
  return tile;
}

std::vector<uint8_t> write_hgt(const Heightmap& hm, std::span<const uint8_t> void_mask) {
  if (hm.width != kHgtSide || hm.height != kHgtSide) throw InvalidArgument("HGT tiles are 3601x3601");
  if (!void_mask.empty() && void_mask.size() != hm.size()) throw InvalidArgument("void mask size mismatch");
  std::vector<uint8_t> out(kHgtBytes);
  for (size_t i = 0; i < hm.size(); ++i) {
    int16_t v = kHgtVoid;
    if (void_mask.empty() || !void_mask[i]) {
      const long r = std::lround(hm.elevations[i]);
      if (r <= kHgtVoid || r > INT16_MAX) throw InvalidArgument("elevation does not fit an HGT sample");
      v = static_cast<int16_t>(r);
    }
    const auto u = static_cast<uint16_t>(v);
    out[2 * i] = static_cast<uint8_t>(u >> 8);
    out[2 * i + 1] = static_cast<uint8_t>(u & 0xff);
  }
  return out;
}

}  // namespace terra::raster
