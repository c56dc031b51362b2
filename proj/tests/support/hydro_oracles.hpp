#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "terra/core/rng.hpp"
#include "terra/geomorph/hydrology.hpp"

namespace terra::test {

inline geomorph::ElevationGrid random_grid(int w, int h, Rng& rng, int levels = 20) {
  geomorph::ElevationGrid g(w, h);
  for (double& v : g.v) v = static_cast<double>(rng.below(levels));
  return g;
}

// Smallest surface with W = h on the border and W(c) = max(h(c), min_n W(n) + eps)
// inside, reached by lowering from +inf until nothing changes.
inline geomorph::ElevationGrid fixpoint_fill(const geomorph::ElevationGrid& h, double eps) {
  geomorph::ElevationGrid w = h;
  for (int y = 0; y < h.height; ++y)
    for (int x = 0; x < h.width; ++x)
      if (!h.on_border(x, y)) w.at(x, y) = std::numeric_limits<double>::infinity();
  for (bool changed = true; changed;) {
    changed = false;
    for (int y = 1; y < h.height - 1; ++y)
      for (int x = 1; x < h.width - 1; ++x) {
        double lo = std::numeric_limits<double>::infinity();
        for (int d = 0; d < 8; ++d) lo = std::min(lo, w.at(x + geomorph::kDx[d], y + geomorph::kDy[d]));
        const double nv = std::max(h.at(x, y), lo + eps);
        if (nv < w.at(x, y)) {
          w.at(x, y) = nv;
          changed = true;
        }
      }
  }
  return w;
}

// For each pixel, walk its flow path and count every pixel visited.
inline geomorph::Grid<int64_t> path_walk_accumulation(const geomorph::Grid<geomorph::Direction>& dir) {
  geomorph::Grid<int64_t> acc(dir.width, dir.height, 0);
  for (int y = 0; y < dir.height; ++y)
    for (int x = 0; x < dir.width; ++x) {
      int cx = x, cy = y;
      for (size_t steps = 0;; ++steps) {
        if (steps > dir.size()) throw std::logic_error("flow path longer than the grid");
        ++acc.at(cx, cy);
        const geomorph::Direction d = dir.at(cx, cy);
        if (d == geomorph::Direction::kNone) break;
        cx += geomorph::kDx[static_cast<int>(d)];
        cy += geomorph::kDy[static_cast<int>(d)];
      }
    }
  return acc;
}

// Brute-force steepest-descent direction with explicit distances.
inline geomorph::Direction reference_direction(const geomorph::ElevationGrid& g, int x, int y) {
  const int ox[8] = {1, 1, 0, -1, -1, -1, 0, 1};  // E SE S SW W NW N NE
  const int oy[8] = {0, 1, 1, 1, 0, -1, -1, -1};
  double best = 0;
  int pick = 8;
  for (int d = 0; d < 8; ++d) {
    const int nx = x + ox[d], ny = y + oy[d];
    if (nx < 0 || ny < 0 || nx >= g.width || ny >= g.height) continue;
    const double dist = (ox[d] != 0 && oy[d] != 0) ? std::sqrt(2.0) : 1.0;
    const double slope = (g.at(x, y) - g.at(nx, ny)) / dist;
    if (slope > best) best = slope, pick = d;
  }
  return static_cast<geomorph::Direction>(pick);
}


}  // namespace terra::test
