#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "terra/geomorph/sketch.hpp"
#include "terra/raster/io.hpp"
#include "terra/raster/quantize.hpp"

namespace terra::synth {

struct Palette {
  raster::Rgb low{58, 104, 52};
  raster::Rgb high{214, 204, 180};
  raster::Rgb slope{92, 80, 70};
};

struct SynthConfig {
  uint64_t seed = 0;
  int size_px = 64;
  int octaves = 5;
  double persistence = 0.5;
  double base_frequency = 3.0;  // lattice cells across the map at the first octave
  double elevation_scale = 1800.0;
  double resolution_m = 25.0;
  Palette palette;
  double correlation_strength = 0.9;
  double slope_weight = 0.35;
  double slope_scale_m = 150.0;  // per-pixel rise that saturates the slope blend

  void validate() const;
};

nlohmann::json to_json(const SynthConfig& c);
SynthConfig synth_config_from_json(const nlohmann::json& j, SynthConfig base = {});

/// Value-noise fBm: sum over octaves of persistence^o * noise(base * 2^o),
/// rescaled to [0, elevation_scale] and clamped to [0, 2000] m.
raster::Heightmap fbm_heightmap(const SynthConfig& cfg);

/// Palette colour by normalised elevation, pulled toward the slope colour by
/// gradient, then mixed with white noise: strength * structure + (1 - strength) * noise.
raster::Texture correlated_texture(const raster::Heightmap& hm, const SynthConfig& cfg);

/// Pair `index` of a dataset rooted at cfg.seed. Heights are rounded to whole
/// meters so the in-memory pair equals what the PNG round-trip gives back.
raster::TerrainPair generate_pair(const SynthConfig& cfg, uint64_t index);

struct DatasetEntry {
  std::string id;
  raster::TerrainPair pair;
  std::optional<raster::Texture> sketch;
  raster::Sidecar sidecar;
};

struct BuildOptions {
  geomorph::SketchConfig sketch;
  int threads = 1;
};

/// Writes heightmaps/, textures/, sketches/, sidecars/ and manifest.json.
/// Output bytes depend only on (n, cfg, sketch config).
void build_synthetic_dataset(const std::filesystem::path& dir, int n, const SynthConfig& cfg,
                             const BuildOptions& opts = {});

/// Reads a dataset directory through its manifest. Missing sketches load as nullopt.
std::vector<DatasetEntry> load_dataset(const std::filesystem::path& dir);

/// Writes one sketch PNG per heightmap into sketches/ and records them in the manifest.
void extract_dataset_sketches(const std::filesystem::path& dir, const geomorph::SketchConfig& cfg, int threads = 1);

}  // namespace terra::synth
