#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "terra/control/adapter.hpp"
#include "terra/diffusion/ldm.hpp"
#include "terra/geomorph/sketch.hpp"
#include "terra/latent/vae.hpp"
#include "terra/pipeline/generator.hpp"
#include "terra/raster/filters.hpp"
#include "terra/service/service.hpp"
#include "terra/synthterra/synth.hpp"

namespace terra::pipeline {

struct DemTile {
  std::string id;
  std::filesystem::path hgt;
  std::filesystem::path texture;  // RGB PNG on the same pixel grid as the tile
  std::optional<raster::RegionMetadata> region;
};

struct DemConfig {
  std::vector<DemTile> tiles;
  double source_resolution_m = 30.0;
  double resolution_m = 30.0;  // resampling target
  int patch_px = 256;
  int out_px = 512;
  double elevation_limit_m = 2000.0;
  raster::RegionFilterConfig region_filter;
};

struct DatasetConfig {
  std::string source = "synthetic";  // "synthetic" or "dem"
  int count = 64;
  synth::SynthConfig synth;  // its seed is replaced by the run seed
  DemConfig dem;
  geomorph::SketchConfig sketch;
};

struct Paths {
  std::filesystem::path dataset = "data";
  std::filesystem::path models = "models";
  std::filesystem::path samples = "samples";
  std::filesystem::path report = "report";
  std::filesystem::path sketches;  // empty: write into the dataset
};

struct PipelineConfig {
  uint64_t seed = 0;
  int threads = 0;  // 0: TERRAFUSION_THREADS or the hardware concurrency
  Paths paths;
  DatasetConfig dataset;

  latent::VaeConfig height_vae;
  latent::VaeConfig texture_vae;
  latent::VaeTrainConfig vae_train;

  diffusion::DenoiserConfig denoiser;  // channel counts follow the VAEs
  diffusion::ScheduleConfig schedule;
  diffusion::LdmTrainConfig ldm_train;
  int texture_pretrain_epochs = 0;
  double extension_init_scale = 0.0;

  control::ControlConfig control;
  control::ControlTrainConfig control_train;
  std::string condition = "sketch";  // "sketch" or "two_color"

  int sample_count = 4;
  SampleOptions sample;
  std::optional<std::filesystem::path> sketch;

  int permutations = 999;
  service::ServiceConfig service;

  int worker_threads() const;
  /// Denoiser config with in/out channels set to twice the latent channels.
  diffusion::DenoiserConfig joint_denoiser() const;
  void validate() const;
};

/// Unknown keys are rejected so that typos surface as errors.
PipelineConfig pipeline_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const PipelineConfig& c);
PipelineConfig load_pipeline_config(const std::filesystem::path& path);
std::string config_hash(const PipelineConfig& c);

/// Per-stage seed derived from the run seed.
uint64_t stage_seed(const PipelineConfig& c, const char* stage);

}  // namespace terra::pipeline
