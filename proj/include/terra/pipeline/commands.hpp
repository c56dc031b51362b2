#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <string>

#include "terra/metrics/metrics.hpp"
#include "terra/pipeline/config.hpp"

namespace terra::pipeline {

using Logger = std::function<void(const std::string&)>;

/// Writes run_manifest.json into `dir`: command, full config, config hash,
/// seed, versions and the hash of every listed output (paths relative to dir).
void write_run_manifest(const std::filesystem::path& dir, const std::string& command, const PipelineConfig& c,
                        const std::map<std::string, std::string>& outputs);

/// Synthetic pairs or patches cut from local DEM tiles, into paths.dataset.
void dataset_build(const PipelineConfig& c, const Logger& log = {});

/// One RGB sketch PNG per dataset heightmap, into paths.sketches or, when that
/// is empty, into the dataset itself.
void sketch_extract(const PipelineConfig& c, const Logger& log = {});

void train_vaes(const PipelineConfig& c, const Logger& log = {});
void train_joint(const PipelineConfig& c, const Logger& log = {});
void train_adapter(const PipelineConfig& c, const Logger& log = {});

/// Writes paths.samples as a dataset directory (16-bit heightmaps, RGB textures).
void sample(const PipelineConfig& c, const Logger& log = {});

/// Compares paths.samples against paths.dataset and writes paths.report.
metrics::EvaluationReport evaluate(const PipelineConfig& c, const Logger& log = {});

/// Condition raster a trained adapter expects for a user image: unchanged for
/// sketch adapters, two-colour quantised for texture adapters.
raster::Texture prepare_condition(const raster::Texture& image, const std::string& mode);

/// The condition mode recorded in an adapter checkpoint.
std::string adapter_condition_mode(const std::filesystem::path& models);

}  // namespace terra::pipeline
