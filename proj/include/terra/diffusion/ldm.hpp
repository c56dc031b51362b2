#pragma once

#include <filesystem>
#include <functional>
#include <optional>

#include "terra/autodiff/optim.hpp"
#include "terra/diffusion/denoiser.hpp"
#include "terra/diffusion/sampler.hpp"

namespace terra::diffusion {

/// Per-modality scalar standardisation of VAE latents before diffusion.
struct LatentStats {
  double h_mean = 0, h_std = 1;
  double x_mean = 0, x_std = 1;
};

LatentStats compute_latent_stats(const std::vector<FTensor>& zh, const std::vector<FTensor>& zx);
nlohmann::json to_json(const LatentStats& s);
LatentStats latent_stats_from_json(const nlohmann::json& j);
/// (z - mean) / std per modality, and back.
FTensor standardise(const FTensor& z, double mean, double std);
FTensor destandardise(const FTensor& z, double mean, double std);

struct ScheduleConfig {
  int T = 1000;
  double beta_start = 1e-4;
  double beta_end = 0.02;
};

nlohmann::json to_json(const ScheduleConfig& s);
ScheduleConfig schedule_config_from_json(const nlohmann::json& j, ScheduleConfig base = {});

/// A denoiser together with its schedule and latent standardisation.
struct JointModel {
  DenoiserModel denoiser;
  ScheduleConfig schedule;
  LatentStats stats;
  int64_t latent_channels = 4;
  int64_t latent_size = 0;  // spatial extent of the training latents (square)
};

ckpt::Checkpoint joint_to_checkpoint(const JointModel& m, const std::optional<ad::OptimizerState<float>>& opt,
                                     nlohmann::json metadata);
JointModel joint_from_checkpoint(const ckpt::Checkpoint& ck);

/// eps_theta(z_t, t) for the loss: any differentiable predictor.
using EpsGraph = std::function<FVar(FBinder& b, const FVar& zt, const std::vector<int>& t)>;

struct LossSample {
  std::vector<int> t;
  FTensor eps;
  FTensor zt;
};

/// Draws t ~ U{1..T} per item and eps ~ N(0, I), and forms z_t from fused z0.
LossSample draw_loss_sample(const FTensor& z0, const NoiseSchedule& s, Rng& rng);

/// Mean squared error between eps and the prediction on fused (zh, zx), over all 2c channels.
FVar joint_loss(FBinder& b, const EpsGraph& predict, const FTensor& zh, const FTensor& zx, const NoiseSchedule& s,
                Rng& rng);
FVar joint_loss(FBinder& b, const DenoiserConfig& cfg, const FTensor& zh, const FTensor& zx, const NoiseSchedule& s,
                Rng& rng);

struct LdmTrainConfig {
  uint64_t seed = 0;
  int epochs = 10;
  int batch_size = 16;
  ad::AdamConfig adam{1e-4, 0.9, 0.999, 1e-8, 0.01};
  int checkpoint_every = 0;
  std::filesystem::path checkpoint_dir;
};

nlohmann::json to_json(const LdmTrainConfig& c);

/// Trains on raw VAE latents, standardised with base.stats; zh[i] / zx[i] are
/// [c, h, w] pairs. Training starts from base.denoiser (fresh or extended). When
/// `resume` is given the run continues from its epoch and optimizer state.
ckpt::Checkpoint train_ldm(const std::vector<FTensor>& zh, const std::vector<FTensor>& zx, const JointModel& base,
                           const LdmTrainConfig& tc, const std::optional<ckpt::Checkpoint>& resume = std::nullopt,
                           const std::function<void(int epoch, double loss)>& on_epoch = {});

/// Single-modality prior: trains an in = out = c denoiser on standardised
/// latents with the same loss. Stands in for a pretrained texture model that
/// extend_channels then widens to the joint 2c layout.
DenoiserModel train_texture_prior(const std::vector<FTensor>& zx, const DenoiserModel& init, const ScheduleConfig& sc,
                                  const LdmTrainConfig& tc);

EpsFn eps_fn(const DenoiserModel& m);

}  // namespace terra::diffusion
