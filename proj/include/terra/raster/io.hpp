#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "terra/raster/heightmap.hpp"

namespace terra::raster {

struct PngImage {
  int width = 0;
  int height = 0;
  int channels = 0;   // 1 or 3
  int bit_depth = 0;  // 8 or 16
  std::vector<uint16_t> samples;  // interleaved, one entry per channel sample
};

std::vector<uint8_t> encode_png(const PngImage& img);
PngImage decode_png(std::span<const uint8_t> bytes);

/// 16-bit grayscale PNG holding integer meters; throws if an elevation
/// rounds outside [0, 65535].
std::vector<uint8_t> encode_heightmap_png(const Heightmap& hm);
Heightmap decode_heightmap_png(std::span<const uint8_t> bytes, double resolution_m = 25.0);

std::vector<uint8_t> encode_texture_png(const Texture& tex);
/// Accepts 8-bit RGB only.
Texture decode_texture_png(std::span<const uint8_t> bytes);

struct Sidecar {
  double resolution_m = 25.0;
  std::string source_id;
  double max_elevation_m = 0.0;
};

std::string sidecar_to_json(const Sidecar& s);
Sidecar sidecar_from_json(const std::string& text);

std::vector<uint8_t> read_file(const std::filesystem::path& path);
/// Writes to a temporary sibling and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::span<const uint8_t> bytes);
void write_file_atomic(const std::filesystem::path& path, const std::string& text);

}  // namespace terra::raster
