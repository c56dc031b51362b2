#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "terra/control/adapter.hpp"
#include "terra/latent/vae.hpp"

namespace terra::pipeline {

inline constexpr const char* kHeightVaeFile = "vae_heightmap.tfck";
inline constexpr const char* kTextureVaeFile = "vae_texture.tfck";
inline constexpr const char* kLdmFile = "ldm.tfck";
inline constexpr const char* kControlFile = "control.tfck";

/// Posterior-mean latents of aligned heightmap/texture pairs.
struct LatentSet {
  std::vector<diffusion::FTensor> zh, zx;
};

LatentSet encode_pairs(const latent::VaeModel& height_vae, const latent::VaeModel& texture_vae,
                       const std::vector<raster::TerrainPair>& pairs);

/// Everything needed to turn seeds (and optionally a condition raster) into terrain.
struct Generator {
  latent::VaeModel height_vae;
  latent::VaeModel texture_vae;
  diffusion::JointModel ldm;
  std::optional<control::ControlModel> control;
  std::string checkpoint_hash;                          // hash over the loaded files' hashes
  std::map<std::string, std::string> checkpoint_files;  // file name -> file hash

  int resolution() const { return static_cast<int>(ldm.latent_size * height_vae.config.downsample); }
};

/// Loads the three required checkpoints from `dir` and the adapter when present.
/// Throws InvalidArgument naming the first missing file.
Generator load_generator(const std::filesystem::path& dir);

struct SampleOptions {
  int steps = 20;
  std::string sampler = "ddim";  // "ddim" (strided, eta = 0) or "ddpm" (all T ancestral steps)
  int batch = 8;
};

/// Sample i uses seed substream(seed, "sampling", first_index + i), so any
/// sample can be regenerated alone.
std::vector<raster::TerrainPair> generate(const Generator& g, int count, uint64_t seed, const SampleOptions& opts,
                                          const std::optional<raster::Texture>& condition = std::nullopt,
                                          uint64_t first_index = 0);

/// Decodes fused standardised latents [N, 2c, h, w] into terrain pairs.
std::vector<raster::TerrainPair> decode_latents(const Generator& g, const diffusion::FTensor& z);

}  // namespace terra::pipeline
