#pragma once

#include <cstdint>
#include <vector>

#include "terra/core/error.hpp"
#include "terra/raster/heightmap.hpp"

namespace terra::geomorph {

template <typename T>
struct Grid {
  int width = 0;
  int height = 0;
  std::vector<T> v;

  Grid() = default;
  Grid(int w, int h, T fill = T{}) : width(w), height(h), v(static_cast<size_t>(w) * h, fill) {
    if (w < 1 || h < 1) throw InvalidArgument("grid extents must be positive");
  }
  Grid(int w, int h, std::vector<T> values) : width(w), height(h), v(std::move(values)) {
    if (w < 1 || h < 1 || v.size() != static_cast<size_t>(w) * h) throw InvalidArgument("grid size mismatch");
  }

  T& at(int x, int y) { return v[static_cast<size_t>(y) * width + x]; }
  const T& at(int x, int y) const { return v[static_cast<size_t>(y) * width + x]; }
  size_t size() const { return v.size(); }
  bool inside(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }
  bool on_border(int x, int y) const { return x == 0 || y == 0 || x == width - 1 || y == height - 1; }

  friend bool operator==(const Grid&, const Grid&) = default;
};

using ElevationGrid = Grid<double>;
using Mask = Grid<uint8_t>;

ElevationGrid to_grid(const raster::Heightmap& hm);

/// D8 neighbour order, also the tie-break order.
enum class Direction : uint8_t { kE, kSE, kS, kSW, kW, kNW, kN, kNE, kNone };

inline constexpr int kDx[8] = {1, 1, 0, -1, -1, -1, 0, 1};
inline constexpr int kDy[8] = {0, 1, 1, 1, 0, -1, -1, -1};

}  // namespace terra::geomorph
