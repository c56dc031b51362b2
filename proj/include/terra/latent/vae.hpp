#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "terra/autodiff/nn.hpp"
#include "terra/autodiff/optim.hpp"
#include "terra/ckpt/checkpoint.hpp"
#include "terra/raster/heightmap.hpp"

namespace terra::latent {

using FTensor = ad::Tensor<float>;

enum class Modality { kHeightmap, kTexture };
std::string to_string(Modality m);
Modality modality_from_string(const std::string& s);

struct VaeConfig {
  Modality modality = Modality::kHeightmap;
  int64_t latent_channels = 4;
  int64_t downsample = 4;                     // f, a power of two
  std::vector<int64_t> channels{16, 32, 32};  // one entry per resolution level, log2(f) + 1 entries
  int res_blocks = 1;                         // at the lowest resolution, encoder and decoder
  double beta = 1e-6;
  double h_max = 2000.0;                      // heightmap normalisation

  int64_t in_channels() const { return modality == Modality::kHeightmap ? 1 : 3; }
  void validate() const;
};

nlohmann::json to_json(const VaeConfig& c);
VaeConfig vae_config_from_json(const nlohmann::json& j, VaeConfig base = {});

struct VaeModel {
  VaeConfig config;
  ad::ParameterSet params;  // "enc.*" and "dec.*"
};

VaeModel init_vae(const VaeConfig& cfg, uint64_t seed);

/// z is [c, h, w] (or [N, c, h, w] for batches) with h = H / f, w = W / f.
struct LatentGrid {
  FTensor z;
  Modality modality = Modality::kHeightmap;
};

struct Posterior {
  FTensor mean;
  FTensor logvar;
};

/// Image tensors are [C, H, W] in [-1, 1]; batches are [N, C, H, W].
FTensor heightmap_tensor(const raster::Heightmap& hm, double h_max);
FTensor texture_tensor(const raster::Texture& tex);
raster::Heightmap heightmap_from_tensor(const FTensor& t, double h_max, double resolution_m = 25.0);
raster::Texture texture_from_tensor(const FTensor& t);

Posterior vae_posterior(const VaeModel& m, const FTensor& images);
/// Deterministic mode (rng == nullptr) returns the mean; otherwise mean + sigma * eps.
LatentGrid vae_encode(const VaeModel& m, const FTensor& images, Rng* rng = nullptr);
/// Decoded images clamped to [-1, 1].
FTensor vae_decode(const VaeModel& m, const FTensor& z);

/// 0.5 * mean(mu^2 + sigma^2 - 1 - log sigma^2).
double kl_divergence(const FTensor& mean, const FTensor& logvar);

namespace graph {
struct EncoderOut {
  ad::nn::FVar mean;
  ad::nn::FVar logvar;
};
EncoderOut encode(ad::nn::FBinder& b, const VaeConfig& cfg, const ad::nn::FVar& x);
ad::nn::FVar decode(ad::nn::FBinder& b, const VaeConfig& cfg, const ad::nn::FVar& z);
ad::nn::FVar kl(const ad::nn::FVar& mean, const ad::nn::FVar& logvar);
}  // namespace graph

struct VaeLossTerms {
  ad::nn::FVar total;
  ad::nn::FVar reconstruction;
  ad::nn::FVar kl;
};

/// Reconstruction MSE + beta * KL on a batch, with the reparameterised sample
/// drawn from rng (the unclamped decoder output is compared).
VaeLossTerms vae_loss(ad::nn::FBinder& b, const VaeConfig& cfg, const FTensor& batch, Rng& rng, double beta);

struct VaeTrainConfig {
  uint64_t seed = 0;
  int epochs = 10;
  int batch_size = 8;
  int crop_px = 32;  // 0 trains on full images
  ad::AdamConfig adam{1e-3, 0.9, 0.999, 1e-8, 0.0};
  int checkpoint_every = 0;  // epochs; 0 disables intermediate checkpoints
  std::filesystem::path checkpoint_dir;
};

nlohmann::json to_json(const VaeTrainConfig& c);

struct EpochReport {
  int epoch;
  double loss;
  double reconstruction;
  double kl;
};

ckpt::Checkpoint vae_to_checkpoint(const VaeModel& m, const std::optional<ad::OptimizerState<float>>& opt,
                                   nlohmann::json metadata);
VaeModel vae_from_checkpoint(const ckpt::Checkpoint& ck);

/// Trains on [C, H, W] images. Each epoch draws its shuffle, crops and noise
/// from the "training" sub-stream of the seed at that epoch, so resuming from
/// a checkpoint written after epoch k reproduces the uninterrupted run.
ckpt::Checkpoint train_vae(const std::vector<FTensor>& images, const VaeConfig& cfg, const VaeTrainConfig& tc,
                           const std::optional<ckpt::Checkpoint>& resume = std::nullopt,
                           const std::function<void(const EpochReport&)>& on_epoch = {});

/// Mean squared error of decode(encode_mean(x)) against x, in input units.
double reconstruction_mse(const VaeModel& m, const std::vector<FTensor>& images);

}  // namespace terra::latent
