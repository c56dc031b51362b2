#pragma once

#include <array>
#include <cstdint>

#include "terra/raster/heightmap.hpp"

namespace terra::raster {

using Rgb = std::array<uint8_t, 3>;

struct TwoColorResult {
  Texture image;
  std::array<Rgb, 2> colors;  // colors[0] is the darker one
  bool degenerate = false;    // input had a single color
};

struct QuantizeConfig {
  int max_iterations = 20;
  /// Exact farthest-pair initialization up to this many distinct colors;
  /// above it a two-sweep farthest-point search is used.
  size_t exact_init_limit = 2048;
};

/// 2-means in RGB space, initialized from the two most distant colors; every
/// pixel is replaced by its cluster centroid (rounded to 8 bits).
TwoColorResult quantize_two_color(const Texture& tex, const QuantizeConfig& cfg = {});

/// Sum of squared RGB distances from each pixel to its assigned color.
double quantization_error(const Texture& original, const Texture& quantized);

}  // namespace terra::raster
