#pragma once

#include <filesystem>
#include <functional>
#include <optional>

#include "terra/diffusion/ldm.hpp"
#include "terra/raster/heightmap.hpp"

namespace terra::control {

using diffusion::FBinder;
using diffusion::FTensor;
using diffusion::FVar;

/// ControlNet-style adapter: a trainable copy ("ctl.") of the denoiser encoder
/// whose stem also receives an embedded condition raster, feeding the frozen
/// decoder through zero-initialized 1x1 projections.
struct ControlConfig {
  int64_t downsample = 4;                    // condition pixels per latent cell: 1, 2, 4 or 8
  std::vector<int64_t> embed_channels{16, 32};  // widths of the first two embedding convs
  void validate() const;
};

nlohmann::json to_json(const ControlConfig& c);
ControlConfig control_config_from_json(const nlohmann::json& j, ControlConfig base = {});

struct ControlModel {
  diffusion::JointModel base;
  ControlConfig config;
  ad::ParameterSet adapter;  // every name starts with "ctl."

  /// Base weights frozen plus adapter weights trainable, in one set.
  ad::ParameterSet merged() const;
};

ControlModel init_adapter(const diffusion::JointModel& base, const ControlConfig& cfg, uint64_t seed);

/// RGB raster as a [3, H, W] tensor in [0, 1]; black is all zeros, which is
/// also what condition dropout feeds.
FTensor condition_tensor(const raster::Texture& c);

namespace graph {
FVar condition_embedding(FBinder& b, const ControlConfig& cfg, const FVar& cond);
/// eps prediction with the adapter; params must hold base and "ctl." names.
FVar forward(FBinder& b, const diffusion::DenoiserConfig& dc, const ControlConfig& cc, const FVar& z,
             const std::vector<int>& t, const FVar& cond);
}  // namespace graph

FTensor predict_eps(const ControlModel& m, const FTensor& z, const std::vector<int>& t, const FTensor& cond);

/// The joint loss with the conditioned predictor; cond is [N, 3, H, W].
FVar control_loss(FBinder& b, const ControlModel& m, const FTensor& zh, const FTensor& zx, const FTensor& cond,
                  const diffusion::NoiseSchedule& s, Rng& rng);

struct ControlTrainConfig {
  uint64_t seed = 0;
  int epochs = 10;
  int batch_size = 16;
  ad::AdamConfig adam{1e-5, 0.9, 0.999, 1e-8, 0.0};
  double condition_dropout = 0.1;
  int checkpoint_every = 0;
  std::filesystem::path checkpoint_dir;
};

nlohmann::json to_json(const ControlTrainConfig& c);

ckpt::Checkpoint control_to_checkpoint(const ControlModel& m, const std::optional<ad::OptimizerState<float>>& opt,
                                       nlohmann::json metadata);
/// Rebuilds an adapter on top of `base`; throws InvalidArgument when the
/// checkpoint was trained against different base weights.
ControlModel control_from_checkpoint(const ckpt::Checkpoint& ck, const diffusion::JointModel& base);

/// zh / zx are raw VAE latents (standardised with base.stats); conds are the
/// matching condition rasters as [3, H, W] tensors. Only adapter weights change.
ckpt::Checkpoint train_control(const std::vector<FTensor>& zh, const std::vector<FTensor>& zx,
                               const std::vector<FTensor>& conds, const ControlModel& init,
                               const ControlTrainConfig& tc, const std::optional<ckpt::Checkpoint>& resume = std::nullopt,
                               const std::function<void(int epoch, double loss)>& on_epoch = {});

/// eps function with one condition shared by every item of a batch.
diffusion::EpsFn eps_fn(const ControlModel& m, const FTensor& cond);

}  // namespace terra::control
