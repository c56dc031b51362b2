#pragma once

#include "terra/geomorph/grid.hpp"

namespace terra::geomorph {

struct CannyConfig {
  double sigma = 1.4;
  double low = 0.1;
  double high = 0.2;
};

/// Gaussian blur (edge-replicated), Sobel gradients scaled to per-pixel
/// slope, non-maximum suppression, hysteresis. Thresholds apply to the
/// gradient of the heightmap rescaled to [0, 1]. A constant map gives an
/// empty mask.
Mask canny_cliffs(const ElevationGrid& h, const CannyConfig& cfg = {});

}  // namespace terra::geomorph
