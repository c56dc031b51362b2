#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "terra/core/error.hpp"

namespace terra::raster {

/// Single-channel elevation grid in meters, row-major from the top-left.
struct Heightmap {
  int width = 0;
  int height = 0;
  std::vector<float> elevations;
  double resolution_m = 25.0;

  Heightmap() = default;
  Heightmap(int w, int h, std::vector<float> values, double resolution = 25.0);
  Heightmap(int w, int h, float fill, double resolution = 25.0)
      : Heightmap(w, h, std::vector<float>(static_cast<size_t>(w) * static_cast<size_t>(h), fill), resolution) {}

  float at(int x, int y) const { return elevations[static_cast<size_t>(y) * width + x]; }
  float& at(int x, int y) { return elevations[static_cast<size_t>(y) * width + x]; }
  size_t size() const { return elevations.size(); }
  float min_elevation() const;
  float max_elevation() const;

  /// Throws InvalidArgument unless width, height >= 2 and all values are finite.
  void validate() const;

  friend bool operator==(const Heightmap&, const Heightmap&) = default;
};

/// 8-bit RGB image, interleaved, row-major.
struct Texture {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> rgb;

  Texture() = default;
  Texture(int w, int h, std::vector<uint8_t> data);
  Texture(int w, int h) : Texture(w, h, std::vector<uint8_t>(static_cast<size_t>(w) * h * 3, 0)) {}

  uint8_t at(int x, int y, int c) const { return rgb[(static_cast<size_t>(y) * width + x) * 3 + c]; }
  uint8_t& at(int x, int y, int c) { return rgb[(static_cast<size_t>(y) * width + x) * 3 + c]; }
  size_t pixel_count() const { return static_cast<size_t>(width) * height; }

  friend bool operator==(const Texture&, const Texture&) = default;
};

struct TerrainPair {
  Heightmap height;
  Texture texture;
};

/// Texture <-> [-1, 1] floats (value / 127.5 - 1), planar CHW.
std::vector<float> texture_to_unit(const Texture& t);
Texture texture_from_unit(std::span<const float> chw, int width, int height);

}  // namespace terra::raster
