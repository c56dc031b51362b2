#pragma once

#include <functional>
#include <vector>

#include "json.hpp"
#include "terra/autodiff/nn.hpp"
#include "terra/ckpt/checkpoint.hpp"
#include "terra/diffusion/schedule.hpp"

namespace terra::diffusion {

using ad::nn::FBinder;
using ad::nn::FVar;

/// Two-level conv U-Net without attention:
///   conv_in -> rb0 (skip0) -> down -> rb1 (skip1) -> mid
///   -> up1(cat skip1) -> upsample -> up0(cat skip0) -> conv_out
/// Every res block receives silu(time_mlp(sinusoid(t)) + context).
struct DenoiserConfig {
  int64_t in_channels = 8;
  int64_t out_channels = 8;
  int64_t width = 32;
  int64_t time_dim = 32;  // sinusoid size; the embedding is 2 * width wide

  int64_t emb_dim() const { return 2 * width; }
  void validate() const;
};

nlohmann::json to_json(const DenoiserConfig& c);
DenoiserConfig denoiser_config_from_json(const nlohmann::json& j, DenoiserConfig base = {});

struct DenoiserModel {
  DenoiserConfig config;
  ad::ParameterSet params;
};

DenoiserModel init_denoiser(const DenoiserConfig& cfg, uint64_t seed);

/// The learned stand-in for the fixed text prompt: a [1, emb_dim] vector,
/// zero at creation, added to every timestep embedding.
const FTensor& constant_context(const DenoiserModel& m);

/// [N, time_dim] sinusoidal features of integer timesteps.
FTensor timestep_features(const std::vector<int>& t, int64_t dim);

/// Encoder activations, exposed so a control adapter can add residuals.
struct EncoderFeatures {
  FVar skip0;
  FVar skip1;
  FVar mid;
  FVar emb;  // silu(embedding)
};

struct Residuals {
  std::optional<FVar> skip0, skip1, mid;
};

namespace graph {
FVar embedding(FBinder& b, const DenoiserConfig& cfg, const std::vector<int>& t, int64_t batch);
/// Encoder under a name prefix ("" for the denoiser, "ctl." for an adapter copy);
/// `stem` is added to conv_in's output when given.
EncoderFeatures encoder(FBinder& b, const std::string& prefix, const FVar& x, const FVar& emb,
                        const std::optional<FVar>& stem = std::nullopt);
FVar decoder(FBinder& b, const EncoderFeatures& f, const Residuals& r = {});
FVar forward(FBinder& b, const DenoiserConfig& cfg, const FVar& z, const std::vector<int>& t);
}  // namespace graph

/// Noise prediction without gradients; z is [N, in_channels, h, w].
FTensor predict_eps(const DenoiserModel& m, const FTensor& z, const std::vector<int>& t);

/// Copies a model into one with more input/output channels. Existing weights
/// are kept; new conv_in input slices and conv_out output rows are drawn from
/// N(0, init_scale^2), new output biases are zero. `prepend` puts the new
/// channels first (e.g. heightmap channels in front of a texture-only model).
DenoiserModel extend_channels(const DenoiserModel& m, int64_t old_in, int64_t old_out, int64_t new_in, int64_t new_out,
                              double init_scale, Rng& rng, bool prepend = false);

}  // namespace terra::diffusion
