#include "terra/raster/resample.hpp"

#include <algorithm>
#include <cmath>

namespace terra::raster {
namespace {

struct Tap {
  int i0, i1;
  double f;
};

// Corner-aligned source coordinate of each output sample.
std::vector<Tap> taps(int n_out, int n_src, double step) {
  std::vector<Tap> t(n_out);
  for (int i = 0; i < n_out; ++i) {
    double s = std::min(i * step, static_cast<double>(n_src - 1));
    int i0 = static_cast<int>(std::floor(s));
    if (i0 >= n_src - 1) i0 = std::max(0, n_src - 2);
    const double f = n_src == 1 ? 0.0 : s - i0;
    t[i] = {i0, std::min(i0 + 1, n_src - 1), f};
  }
  return t;
}

double aligned_step(int n_src, int n_out) { return n_out > 1 ? static_cast<double>(n_src - 1) / (n_out - 1) : 0.0; }

template <typename Get>
double lerp2(Get get, const Tap& tx, const Tap& ty) {
  const double top = get(tx.i0, ty.i0) * (1.0 - tx.f) + get(tx.i1, ty.i0) * tx.f;
  const double bot = get(tx.i0, ty.i1) * (1.0 - tx.f) + get(tx.i1, ty.i1) * tx.f;
  return top * (1.0 - ty.f) + bot * ty.f;
}

Heightmap resize_with_taps(const Heightmap& hm, const std::vector<Tap>& xs, const std::vector<Tap>& ys,
                           double resolution) {
  const int w = static_cast<int>(xs.size()), h = static_cast<int>(ys.size());
  std::vector<float> out(static_cast<size_t>(w) * h);
  auto get = [&](int x, int y) { return static_cast<double>(hm.at(x, y)); };
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) out[static_cast<size_t>(y) * w + x] = static_cast<float>(lerp2(get, xs[x], ys[y]));
  return Heightmap(w, h, std::move(out), resolution);
}

}  // namespace

Heightmap resample_bilinear(const Heightmap& hm, double target_resolution_m) {
  if (!(target_resolution_m > 0.0)) throw InvalidArgument("target resolution must be positive");
  const double ratio = hm.resolution_m / target_resolution_m;
  // The small slack keeps exact ratios (e.g. 30 -> 15) from losing a sample to rounding.
  const int w = static_cast<int>(std::floor((hm.width - 1) * ratio + 1e-9)) + 1;
  const int h = static_cast<int>(std::floor((hm.height - 1) * ratio + 1e-9)) + 1;
  if (w < 2 || h < 2) throw InvalidArgument("resampled heightmap would be smaller than 2x2");
  const double step = target_resolution_m / hm.resolution_m;
  return resize_with_taps(hm, taps(w, hm.width, step), taps(h, hm.height, step), target_resolution_m);
}

Heightmap resize_bilinear(const Heightmap& hm, int width, int height) {
  if (width < 2 || height < 2) throw InvalidArgument("resize target must be at least 2x2");
  const double res = hm.resolution_m * (hm.width - 1) / (width - 1);
  return resize_with_taps(hm, taps(width, hm.width, aligned_step(hm.width, width)),
                          taps(height, hm.height, aligned_step(hm.height, height)), res);
}

Texture resize_bilinear(const Texture& tex, int width, int height) {
  if (width < 1 || height < 1) throw InvalidArgument("resize target must be positive");
  const auto xs = taps(width, tex.width, aligned_step(tex.width, width));
  const auto ys = taps(height, tex.height, aligned_step(tex.height, height));
  Texture out(width, height);
  for (int c = 0; c < 3; ++c) {
    auto get = [&](int x, int y) { return static_cast<double>(tex.at(x, y, c)); };
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x)
        out.at(x, y, c) = static_cast<uint8_t>(std::clamp(std::lround(lerp2(get, xs[x], ys[y])), 0L, 255L));
  }
  return out;
}

}  // namespace terra::raster
