#include "terra/raster/normalize.hpp"

#include <string>

namespace terra::raster {
namespace {

void check_spec(const NormalizationSpec& spec) {
  if (!(spec.h_max > 0.0)) throw InvalidArgument("H_max must be positive");
}

}  // namespace

double normalize_elevation(double h, const NormalizationSpec& spec) {
  check_spec(spec);
  if (!(h >= 0.0 && h <= spec.h_max))
    throw InvalidArgument("elevation " + std::to_string(h) + " outside [0, " + std::to_string(spec.h_max) + "]");
  return (h / spec.h_max - 0.5) * 2.0;
}

double denormalize_elevation(double v, const NormalizationSpec& spec) {
  check_spec(spec);
  return (v * 0.5 + 0.5) * spec.h_max;
}

std::vector<float> normalize_height(const Heightmap& hm, const NormalizationSpec& spec) {
  std::vector<float> out(hm.size());
  for (size_t i = 0; i < hm.size(); ++i) out[i] = static_cast<float>(normalize_elevation(hm.elevations[i], spec));
  return out;
}

Heightmap denormalize_height(std::span<const float> values, int width, int height, const NormalizationSpec& spec,
                             double resolution_m) {
  std::vector<float> out(values.size());
  for (size_t i = 0; i < values.size(); ++i) out[i] = static_cast<float>(denormalize_elevation(values[i], spec));
  return Heightmap(width, height, std::move(out), resolution_m);
}

}  // namespace terra::raster
