#pragma once

#include <cstdint>

#include "terra/autodiff/params.hpp"

namespace terra::ad {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

template <typename T>
struct OptimizerState {
  int64_t step = 0;
  std::map<std::string, Tensor<T>, std::less<>> first_moment;
  std::map<std::string, Tensor<T>, std::less<>> second_moment;
};

/// Decoupled weight decay (p *= 1 - lr*wd) followed by a bias-corrected Adam
/// update. Frozen parameters are skipped; every trainable parameter needs a
/// gradient of matching shape.
template <typename T>
void adamw_step(BasicParameterSet<T>& params, const GradMap<T>& grads, OptimizerState<T>& state,
                const AdamConfig& cfg);

/// adamw_step with weight_decay forced to zero.
template <typename T>
void adam_step(BasicParameterSet<T>& params, const GradMap<T>& grads, OptimizerState<T>& state, AdamConfig cfg) {
  cfg.weight_decay = 0.0;
  adamw_step(params, grads, state, cfg);
}

}  // namespace terra::ad
