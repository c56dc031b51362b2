#pragma once

#include "terra/raster/heightmap.hpp"

namespace terra::raster {

/// Bilinear resampling to a new ground resolution. Sample i of the output
/// sits at source coordinate i * target / source (corner-aligned), so the
/// extent is floor((n - 1) * source / target) + 1.
Heightmap resample_bilinear(const Heightmap& hm, double target_resolution_m);

/// Corner-aligned bilinear resize to an explicit pixel size.
Heightmap resize_bilinear(const Heightmap& hm, int width, int height);
Texture resize_bilinear(const Texture& tex, int width, int height);

}  // namespace terra::raster
