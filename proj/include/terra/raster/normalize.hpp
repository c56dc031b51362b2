#pragma once

#include <span>
#include <vector>

#include "terra/raster/heightmap.hpp"

namespace terra::raster {

struct NormalizationSpec {
  double h_max = 2000.0;
};

/// (h / H_max - 0.5) * 2 for each elevation; requires 0 <= h <= H_max.
std::vector<float> normalize_height(const Heightmap& hm, const NormalizationSpec& spec = {});
double normalize_elevation(double h, const NormalizationSpec& spec = {});

Heightmap denormalize_height(std::span<const float> values, int width, int height,
                             const NormalizationSpec& spec = {}, double resolution_m = 25.0);
double denormalize_elevation(double v, const NormalizationSpec& spec = {});

}  // namespace terra::raster
