#pragma once

#include <array>
#include <string_view>
#include <vector>

#include "terra/raster/heightmap.hpp"

namespace terra::raster {

/// Keeps pairs whose peak elevation is at most `limit_m` (inclusive).
bool passes_elevation_filter(const Heightmap& hm, double limit_m = 2000.0);
std::vector<TerrainPair> elevation_filter(std::vector<TerrainPair> pairs, double limit_m = 2000.0);

enum class Climate { kTropical, kTemperate, kSubarctic, kPolar, kArid, kOther };

struct LandcoverFlags {
  bool cropland = false;
  bool built_up = false;
  bool water = false;
  bool cloud = false;
};

struct RegionMetadata {
  double mean_elevation_m = 0.0;
  double human_modification = 0.0;  // [0, 1]
  Climate climate = Climate::kOther;
  LandcoverFlags landcover;
};

enum class RejectReason {
  kNone,
  kLowElevation,
  kHumanModification,
  kClimate,
  kCropland,
  kBuiltUp,
  kWater,
  kCloud,
  kCategoryFull,
};

std::string_view to_string(RejectReason r);
std::string_view to_string(Climate c);

struct FilterDecision {
  bool accepted = false;
  RejectReason reason = RejectReason::kNone;
};

struct RegionFilterConfig {
  double min_mean_elevation_m = 100.0;
  double max_human_modification = 0.3;  // exclusive
  int per_category_cap = 125;
};

/// Stateless predicate over one region.
FilterDecision region_filter(const RegionMetadata& meta, const RegionFilterConfig& cfg = {});

/// Applies region_filter over a stream and enforces the per-climate cap in
/// input order.
class RegionSelector {
 public:
  explicit RegionSelector(RegionFilterConfig cfg = {}) : cfg_(cfg) {}
  FilterDecision offer(const RegionMetadata& meta);
  int accepted(Climate c) const { return counts_[static_cast<size_t>(c)]; }

 private:
  RegionFilterConfig cfg_;
  std::array<int, 6> counts_{};
};

}  // namespace terra::raster
