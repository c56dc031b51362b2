#pragma once

#include "terra/geomorph/canny.hpp"
#include "terra/geomorph/hydrology.hpp"
#include "terra/raster/heightmap.hpp"

namespace terra::geomorph {

/// Red = valley, green = ridge, blue = cliff; line pixels are 255.
raster::Texture compose_sketch(const Mask& valley, const Mask& ridge, const Mask& cliff);

struct SketchConfig {
  double valley_percentile = 98.0;
  double ridge_percentile = 98.0;
  double epsilon = kFillEpsilon;
  CannyConfig canny;
};

struct SketchResult {
  raster::Texture sketch;
  bool degenerate = false;
};

SketchResult extract_sketch(const raster::Heightmap& hm, const SketchConfig& cfg = {});

}  // namespace terra::geomorph
