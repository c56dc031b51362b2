#include "terra/geomorph/sketch.hpp"

namespace terra::geomorph {

raster::Texture compose_sketch(const Mask& valley, const Mask& ridge, const Mask& cliff) {
  if (valley.width != ridge.width || valley.width != cliff.width || valley.height != ridge.height ||
      valley.height != cliff.height)
    throw InvalidArgument("sketch masks differ in size");
  raster::Texture t(valley.width, valley.height);
  for (size_t i = 0; i < valley.size(); ++i) {
    t.rgb[i * 3] = valley.v[i] ? 255 : 0;
    t.rgb[i * 3 + 1] = ridge.v[i] ? 255 : 0;
    t.rgb[i * 3 + 2] = cliff.v[i] ? 255 : 0;
  }
  return t;
}

SketchResult extract_sketch(const raster::Heightmap& hm, const SketchConfig& cfg) {
  const ElevationGrid g = to_grid(hm);
  const ChannelResult valley = extract_channels(g, ChannelMode::kValley, cfg.valley_percentile, cfg.epsilon);
  const ChannelResult ridge = extract_channels(g, ChannelMode::kRidge, cfg.ridge_percentile, cfg.epsilon);
  const Mask cliff = canny_cliffs(g, cfg.canny);
  return {compose_sketch(valley.mask, ridge.mask, cliff), valley.degenerate};
}

}  // namespace terra::geomorph
