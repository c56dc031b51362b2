#pragma once

#include <span>
#include <vector>

#include "terra/raster/heightmap.hpp"

namespace terra::raster {

/// Non-overlapping row-major tiling; trailing partial rows/columns are
/// dropped. When `void_mask` is given, tiles touching a void are skipped.
std::vector<TerrainPair> extract_patches(const Heightmap& hm, const Texture& tex, int patch_px = 256,
                                         std::span<const uint8_t> void_mask = {});

/// Bilinear upsampling of both rasters to out_px x out_px.
TerrainPair upsample_patch(const TerrainPair& pair, int out_px = 512);

}  // namespace terra::raster
