#pragma once

#include <functional>
#include <vector>

#include "terra/diffusion/schedule.hpp"

namespace terra::diffusion {

/// eps prediction for a batch z at integer timestep t.
using EpsFn = std::function<FTensor(const FTensor& z, int t)>;

/// Ancestral DDPM sampling over all T steps with the posterior variance
/// (1 - ab[t-1]) / (1 - ab[t]) * beta[t]. One seed per sample; each sample's
/// noise comes only from its own seed, so results do not depend on batching.
FTensor ddpm_sample(const EpsFn& eps, const NoiseSchedule& s, const ad::Shape& item_shape,
                    const std::vector<uint64_t>& seeds);

/// Deterministic (eta = 0) sampling over timesteps floor(i * T / steps),
/// i = steps..1, ending at alpha_bar = 1. Exactly `steps` model calls.
FTensor strided_sample(const EpsFn& eps, const NoiseSchedule& s, int steps, const ad::Shape& item_shape,
                       const std::vector<uint64_t>& seeds);

std::vector<int> strided_timesteps(int T, int steps);

}  // namespace terra::diffusion
