#include "terra/raster/heightmap.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace terra::raster {

Heightmap::Heightmap(int w, int h, std::vector<float> values, double resolution)
    : width(w), height(h), elevations(std::move(values)), resolution_m(resolution) {
  if (w < 1 || h < 1) throw InvalidArgument("heightmap extents must be positive");
  if (elevations.size() != static_cast<size_t>(w) * static_cast<size_t>(h))
    throw InvalidArgument("heightmap value count does not match " + std::to_string(w) + "x" + std::to_string(h));
  if (!(resolution > 0.0)) throw InvalidArgument("heightmap resolution must be positive");
}

float Heightmap::min_elevation() const { return *std::min_element(elevations.begin(), elevations.end()); }
float Heightmap::max_elevation() const { return *std::max_element(elevations.begin(), elevations.end()); }

void Heightmap::validate() const {
  if (width < 2 || height < 2) throw InvalidArgument("heightmap must be at least 2x2");
  if (elevations.size() != static_cast<size_t>(width) * height) throw InvalidArgument("heightmap size mismatch");
  for (float v : elevations)
    if (!std::isfinite(v)) throw InvalidArgument("heightmap contains a non-finite elevation");
}

Texture::Texture(int w, int h, std::vector<uint8_t> data) : width(w), height(h), rgb(std::move(data)) {
  if (w < 1 || h < 1) throw InvalidArgument("texture extents must be positive");
  if (rgb.size() != static_cast<size_t>(w) * h * 3) throw InvalidArgument("texture byte count does not match extents");
}

std::vector<float> texture_to_unit(const Texture& t) {
  const size_t n = t.pixel_count();
  std::vector<float> out(n * 3);
  for (size_t i = 0; i < n; ++i)
    for (int c = 0; c < 3; ++c) out[c * n + i] = static_cast<float>(t.rgb[i * 3 + c] / 127.5 - 1.0);
  return out;
}

Texture texture_from_unit(std::span<const float> chw, int width, int height) {
  const size_t n = static_cast<size_t>(width) * height;
  if (chw.size() != n * 3) throw InvalidArgument("texture_from_unit: expected 3 planes");
  Texture t(width, height);
  for (size_t i = 0; i < n; ++i)
    for (int c = 0; c < 3; ++c) {
      const double v = std::clamp((static_cast<double>(chw[c * n + i]) + 1.0) * 127.5, 0.0, 255.0);
      t.rgb[i * 3 + c] = static_cast<uint8_t>(std::lround(v));
    }
  return t;
}

}  // namespace terra::raster
