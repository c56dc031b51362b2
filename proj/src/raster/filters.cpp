#include "terra/raster/filters.hpp"

#include <algorithm>

namespace terra::raster {

bool passes_elevation_filter(const Heightmap& hm, double limit_m) { return hm.max_elevation() <= limit_m; }

std::vector<TerrainPair> elevation_filter(std::vector<TerrainPair> pairs, double limit_m) {
  std::erase_if(pairs, [&](const TerrainPair& p) { return !passes_elevation_filter(p.height, limit_m); });
  return pairs;
}

std::string_view to_string(RejectReason r) {
  switch (r) {
    case RejectReason::kNone: return "none";
    case RejectReason::kLowElevation: return "low elevation";
    case RejectReason::kHumanModification: return "human modification";
    case RejectReason::kClimate: return "climate";
    case RejectReason::kCropland: return "cropland";
    case RejectReason::kBuiltUp: return "built-up";
    case RejectReason::kWater: return "water";
    case RejectReason::kCloud: return "cloud";
    case RejectReason::kCategoryFull: return "category full";
  }
  return "unknown";
}

std::string_view to_string(Climate c) {
  switch (c) {
    case Climate::kTropical: return "tropical";
    case Climate::kTemperate: return "temperate";
    case Climate::kSubarctic: return "subarctic";
    case Climate::kPolar: return "polar";
    case Climate::kArid: return "arid";
    case Climate::kOther: return "other";
  }
  return "unknown";
}

FilterDecision region_filter(const RegionMetadata& meta, const RegionFilterConfig& cfg) {
  if (!(meta.human_modification >= 0.0 && meta.human_modification <= 1.0))
    throw InvalidArgument("human modification index must lie in [0, 1]");
  auto reject = [](RejectReason r) { return FilterDecision{false, r}; };
  if (meta.mean_elevation_m < cfg.min_mean_elevation_m) return reject(RejectReason::kLowElevation);
  if (meta.human_modification >= cfg.max_human_modification) return reject(RejectReason::kHumanModification);
  if (meta.climate == Climate::kArid || meta.climate == Climate::kOther) return reject(RejectReason::kClimate);
  if (meta.landcover.cropland) return reject(RejectReason::kCropland);
  if (meta.landcover.built_up) return reject(RejectReason::kBuiltUp);
  if (meta.landcover.water) return reject(RejectReason::kWater);
  if (meta.landcover.cloud) return reject(RejectReason::kCloud);
  return {true, RejectReason::kNone};
}

FilterDecision RegionSelector::offer(const RegionMetadata& meta) {
  FilterDecision d = region_filter(meta, cfg_);
  if (!d.accepted) return d;
  int& n = counts_[static_cast<size_t>(meta.climate)];
  if (n >= cfg_.per_category_cap) return {false, RejectReason::kCategoryFull};
  ++n;
  return d;
}

}  // namespace terra::raster
