#include "terra/diffusion/sampler.hpp"

#include <cmath>

#include "terra/autodiff/batch.hpp"

namespace terra::diffusion {

namespace {

void check_args(const NoiseSchedule& s, const ad::Shape& item_shape, const std::vector<uint64_t>& seeds) {
  if (s.T < 1 || s.alpha_bar.size() != static_cast<size_t>(s.T) + 1) throw InvalidArgument("invalid noise schedule");
  if (seeds.empty()) throw InvalidArgument("sampling needs at least one seed");
  if (item_shape.empty() || ad::shape_numel(item_shape) < 1) throw InvalidArgument("empty sample shape");
}

ad::Shape batch_shape(const ad::Shape& item, size_t n) {
  ad::Shape s{static_cast<int64_t>(n)};
  s.insert(s.end(), item.begin(), item.end());
  return s;
}

FTensor call(const EpsFn& eps, const FTensor& z, int t) {
  FTensor e = eps(z, t);
  if (e.shape() != z.shape()) throw InvalidArgument("eps function returned a wrongly shaped tensor");
  for (float v : e.data())
    if (!std::isfinite(v)) throw NumericError("eps prediction is not finite at t=" + std::to_string(t));
  return e;
}

}  // namespace

FTensor ddpm_sample(const EpsFn& eps, const NoiseSchedule& s, const ad::Shape& item_shape,
                    const std::vector<uint64_t>& seeds) {
  check_args(s, item_shape, seeds);
  const int64_t per = ad::shape_numel(item_shape);
  std::vector<Rng> rngs;
  for (uint64_t seed : seeds) rngs.emplace_back(seed);
  FTensor z(batch_shape(item_shape, seeds.size()));
  for (size_t n = 0; n < seeds.size(); ++n)
    for (int64_t i = 0; i < per; ++i) z.data()[n * per + i] = static_cast<float>(rngs[n].normal());

  for (int t = s.T; t >= 1; --t) {
    const FTensor e = call(eps, z, t);
    const double ab = s.alpha_bar[t], ab_prev = s.alpha_bar[t - 1], beta = s.beta[t];
    const double c0 = 1.0 / std::sqrt(1.0 - beta), c1 = beta / std::sqrt(1.0 - ab);
    const double sigma = t > 1 ? std::sqrt((1.0 - ab_prev) / (1.0 - ab) * beta) : 0.0;
    for (size_t n = 0; n < seeds.size(); ++n)
      for (int64_t i = 0; i < per; ++i) {
        const int64_t k = static_cast<int64_t>(n) * per + i;
        double v = c0 * (z[k] - c1 * e[k]);
        if (t > 1) v += sigma * rngs[n].normal();
        z[k] = static_cast<float>(v);
      }
  }
  return z;
}

std::vector<int> strided_timesteps(int T, int steps) {
  if (steps < 1 || steps > T) throw InvalidArgument("step count must lie in [1, T]");
  std::vector<int> ts(static_cast<size_t>(steps) + 1);
  for (int i = 0; i <= steps; ++i) ts[i] = static_cast<int>(static_cast<int64_t>(i) * T / steps);
  return ts;
}

FTensor strided_sample(const EpsFn& eps, const NoiseSchedule& s, int steps, const ad::Shape& item_shape,
                       const std::vector<uint64_t>& seeds) {
  check_args(s, item_shape, seeds);
  const std::vector<int> ts = strided_timesteps(s.T, steps);
  const int64_t per = ad::shape_numel(item_shape);
  FTensor z(batch_shape(item_shape, seeds.size()));
  for (size_t n = 0; n < seeds.size(); ++n) {
    Rng rng(seeds[n]);
    for (int64_t i = 0; i < per; ++i) z.data()[n * per + i] = static_cast<float>(rng.normal());
  }
  for (int i = steps; i >= 1; --i) {
    const int t = ts[i];
    const FTensor e = call(eps, z, t);
    const double ab = s.alpha_bar[t], ab_prev = s.alpha_bar[ts[i - 1]];
    const double a = std::sqrt(1.0 - ab), r = 1.0 / std::sqrt(ab);
    const double p = std::sqrt(ab_prev), q = std::sqrt(1.0 - ab_prev);
    for (int64_t k = 0; k < z.numel(); ++k) {
      const double x0 = (z[k] - a * e[k]) * r;
      z[k] = static_cast<float>(p * x0 + q * e[k]);
    }
  }
  return z;
}

}  // namespace terra::diffusion
