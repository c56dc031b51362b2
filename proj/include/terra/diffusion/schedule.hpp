#pragma once

#include <vector>

#include "terra/autodiff/tensor.hpp"

namespace terra::diffusion {

using FTensor = ad::Tensor<float>;

/// beta[t] and alpha_bar[t] for t = 0..T; index 0 holds beta = 0, alpha_bar = 1.
struct NoiseSchedule {
  int T = 0;
  std::vector<double> beta;
  std::vector<double> alpha_bar;

  double alpha(int t) const { return 1.0 - beta.at(t); }
};

/// Linear beta from beta_start (t = 1) to beta_end (t = T).
NoiseSchedule make_schedule(int T = 1000, double beta_start = 1e-4, double beta_end = 0.02);

/// sqrt(ab) * z0 + sqrt(1 - ab) * eps, elementwise.
FTensor forward_diffuse(const FTensor& z0, double alpha_bar, const FTensor& eps);
FTensor forward_diffuse(const FTensor& z0, int t, const FTensor& eps, const NoiseSchedule& s);

/// Heightmap latent channels first. Works on [c, h, w] and [N, c, h, w].
FTensor fuse_latents(const FTensor& zh, const FTensor& zx);
std::pair<FTensor, FTensor> split_latents(const FTensor& z, int64_t heightmap_channels);

}  // namespace terra::diffusion
