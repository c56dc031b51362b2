#include "terra/diffusion/schedule.hpp"

#include <cmath>

namespace terra::diffusion {

NoiseSchedule make_schedule(int T, double beta_start, double beta_end) {
  if (T < 1) throw InvalidArgument("schedule needs T >= 1");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
    throw InvalidArgument("schedule needs 0 < beta_start <= beta_end < 1");
  NoiseSchedule s;
  s.T = T;
  s.beta.assign(T + 1, 0.0);
  s.alpha_bar.assign(T + 1, 1.0);
  for (int t = 1; t <= T; ++t) {
    s.beta[t] = T == 1 ? beta_start : beta_start + (beta_end - beta_start) * (t - 1) / (T - 1);
    s.alpha_bar[t] = s.alpha_bar[t - 1] * (1.0 - s.beta[t]);
  }
  return s;
}

FTensor forward_diffuse(const FTensor& z0, double alpha_bar, const FTensor& eps) {
  if (z0.shape() != eps.shape()) throw InvalidArgument("forward_diffuse: noise shape differs from z0");
  if (!(alpha_bar >= 0.0 && alpha_bar <= 1.0)) throw InvalidArgument("alpha_bar must lie in [0, 1]");
  const double a = std::sqrt(alpha_bar), b = std::sqrt(1.0 - alpha_bar);
  FTensor out(z0.shape());
  for (int64_t i = 0; i < z0.numel(); ++i) out[i] = static_cast<float>(a * z0[i] + b * eps[i]);
  return out;
}

FTensor forward_diffuse(const FTensor& z0, int t, const FTensor& eps, const NoiseSchedule& s) {
  if (t < 0 || t > s.T) throw InvalidArgument("timestep out of range");
  return forward_diffuse(z0, s.alpha_bar[t], eps);
}

namespace {

// Splits a shape into (outer, channels, inner) around the channel axis.
struct Layout {
  int64_t outer, channels, inner;
};

Layout layout(const FTensor& t) {
  if (t.rank() == 3) return {1, t.dim(0), t.dim(1) * t.dim(2)};
  if (t.rank() == 4) return {t.dim(0), t.dim(1), t.dim(2) * t.dim(3)};
  throw InvalidArgument("latents must be [c,h,w] or [N,c,h,w]");
}

}  // namespace

FTensor fuse_latents(const FTensor& zh, const FTensor& zx) {
  const Layout a = layout(zh), b = layout(zx);
  if (zh.rank() != zx.rank() || a.outer != b.outer || a.inner != b.inner ||
      zh.shape().back() != zx.shape().back())
    throw InvalidArgument("fuse_latents: spatial dims differ");
  ad::Shape s = zh.shape();
  s[zh.rank() - 3] = a.channels + b.channels;
  FTensor out(s);
  auto o = out.data().begin();
  for (int64_t n = 0; n < a.outer; ++n) {
    auto ha = zh.data().begin() + n * a.channels * a.inner;
    o = std::copy(ha, ha + a.channels * a.inner, o);
    auto xb = zx.data().begin() + n * b.channels * b.inner;
    o = std::copy(xb, xb + b.channels * b.inner, o);
  }
  return out;
}

std::pair<FTensor, FTensor> split_latents(const FTensor& z, int64_t hc) {
  const Layout l = layout(z);
  if (hc < 1 || hc >= l.channels) throw InvalidArgument("split_latents: bad channel split");
  ad::Shape sh = z.shape(), sx = z.shape();
  sh[z.rank() - 3] = hc;
  sx[z.rank() - 3] = l.channels - hc;
  FTensor h(sh), x(sx);
  for (int64_t n = 0; n < l.outer; ++n) {
    auto src = z.data().begin() + n * l.channels * l.inner;
    std::copy(src, src + hc * l.inner, h.data().begin() + n * hc * l.inner);
    std::copy(src + hc * l.inner, src + l.channels * l.inner, x.data().begin() + n * (l.channels - hc) * l.inner);
  }
  return {h, x};
}

}  // namespace terra::diffusion
