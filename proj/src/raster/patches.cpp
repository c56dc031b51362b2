#include "terra/raster/patches.hpp"

#include "terra/raster/resample.hpp"

namespace terra::raster {

std::vector<TerrainPair> extract_patches(const Heightmap& hm, const Texture& tex, int patch_px,
                                         std::span<const uint8_t> void_mask) {
  if (patch_px < 2) throw InvalidArgument("patch size must be at least 2");
  if (hm.width != tex.width || hm.height != tex.height) throw InvalidArgument("heightmap and texture extents differ");
  if (hm.width < patch_px || hm.height < patch_px) throw InvalidArgument("grid is smaller than one patch");
  if (!void_mask.empty() && void_mask.size() != hm.size()) throw InvalidArgument("void mask size mismatch");

  std::vector<TerrainPair> out;
  const int nx = hm.width / patch_px, ny = hm.height / patch_px;
  for (int py = 0; py < ny; ++py)
    for (int px = 0; px < nx; ++px) {
      TerrainPair p{Heightmap(patch_px, patch_px, 0.0f, hm.resolution_m), Texture(patch_px, patch_px)};
      bool has_void = false;
      for (int y = 0; y < patch_px; ++y)
        for (int x = 0; x < patch_px; ++x) {
          const int sx = px * patch_px + x, sy = py * patch_px + y;
          if (!void_mask.empty() && void_mask[static_cast<size_t>(sy) * hm.width + sx]) has_void = true;
          p.height.at(x, y) = hm.at(sx, sy);
          for (int c = 0; c < 3; ++c) p.texture.at(x, y, c) = tex.at(sx, sy, c);
        }
      if (!has_void) out.push_back(std::move(p));
    }
  return out;
}

TerrainPair upsample_patch(const TerrainPair& pair, int out_px) {
  return {resize_bilinear(pair.height, out_px, out_px), resize_bilinear(pair.texture, out_px, out_px)};
}

}  // namespace terra::raster
