#include "terra/autodiff/optim.hpp"

#include <cmath>

namespace terra::ad {

template <typename T>
void adamw_step(BasicParameterSet<T>& params, const GradMap<T>& grads, OptimizerState<T>& state,
                const AdamConfig& cfg) {
  if (!(cfg.lr > 0)) throw InvalidArgument("adam: learning rate must be positive");
  for (const auto& [name, p] : params) {
    if (!p.trainable) continue;
    auto it = grads.find(name);
    if (it == grads.end()) throw InvalidArgument("adam: missing gradient for '" + name + "'");
    if (it->second.shape() != p.value.shape()) {
      throw InvalidArgument("adam: gradient shape " + shape_str(it->second.shape()) + " for '" + name +
                            "' does not match " + shape_str(p.value.shape()));
    }
  }
  state.step += 1;
  const T lr = static_cast<T>(cfg.lr);
  const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
  const T eps = static_cast<T>(cfg.eps);
  const T decay = static_cast<T>(1.0 - cfg.lr * cfg.weight_decay);
  const T bc1 = static_cast<T>(1.0 - std::pow(cfg.beta1, static_cast<double>(state.step)));
  const T bc2 = static_cast<T>(1.0 - std::pow(cfg.beta2, static_cast<double>(state.step)));
  for (auto& [name, p] : params) {
    if (!p.trainable) continue;
    const Tensor<T>& g = grads.find(name)->second;
    auto [mit, m_new] = state.first_moment.try_emplace(name, p.value.shape());
    auto [vit, v_new] = state.second_moment.try_emplace(name, p.value.shape());
    Tensor<T>& m = mit->second;
    Tensor<T>& v = vit->second;
    if (m.shape() != p.value.shape() || v.shape() != p.value.shape()) {
      throw InvalidArgument("adam: moment shape mismatch for '" + name + "'");
    }
    auto pv = p.value.data();
    auto gv = g.data();
    auto mv = m.data();
    auto vv = v.data();
    for (size_t i = 0; i < pv.size(); ++i) {
      if (cfg.weight_decay != 0.0) pv[i] *= decay;
      mv[i] = b1 * mv[i] + (T{1} - b1) * gv[i];
      vv[i] = b2 * vv[i] + (T{1} - b2) * gv[i] * gv[i];
      const T mhat = mv[i] / bc1;
      const T vhat = vv[i] / bc2;
      pv[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

template void adamw_step(BasicParameterSet<float>&, const GradMap<float>&, OptimizerState<float>&, const AdamConfig&);
template void adamw_step(BasicParameterSet<double>&, const GradMap<double>&, OptimizerState<double>&,
                         const AdamConfig&);

}  // namespace terra::ad
