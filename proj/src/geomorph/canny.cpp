#include "terra/geomorph/canny.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace terra::geomorph {
namespace {

int clampi(int v, int lo, int hi) { return std::min(std::max(v, lo), hi); }

ElevationGrid gaussian_blur(const ElevationGrid& g, double sigma) {
  if (sigma <= 0.0) return g;
  const int r = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * r + 1);
  double sum = 0;
  for (int i = -r; i <= r; ++i) sum += k[i + r] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (double& v : k) v /= sum;

  ElevationGrid tmp(g.width, g.height), out(g.width, g.height);
  for (int y = 0; y < g.height; ++y)
    for (int x = 0; x < g.width; ++x) {
      double s = 0;
      for (int i = -r; i <= r; ++i) s += k[i + r] * g.at(clampi(x + i, 0, g.width - 1), y);
      tmp.at(x, y) = s;
    }
  for (int y = 0; y < g.height; ++y)
    for (int x = 0; x < g.width; ++x) {
      double s = 0;
      for (int i = -r; i <= r; ++i) s += k[i + r] * tmp.at(x, clampi(y + i, 0, g.height - 1));
      out.at(x, y) = s;
    }
  return out;
}

}  // namespace

Mask canny_cliffs(const ElevationGrid& h, const CannyConfig& cfg) {
  if (!(cfg.low > 0.0 && cfg.low < cfg.high)) throw InvalidArgument("Canny thresholds must satisfy 0 < low < high");
  Mask out(h.width, h.height, 0);
  const auto [lo, hi] = std::minmax_element(h.v.begin(), h.v.end());
  if (*lo == *hi) return out;

  ElevationGrid n = h;
  for (double& v : n.v) v = (v - *lo) / (*hi - *lo);
  const ElevationGrid s = gaussian_blur(n, cfg.sigma);
  auto px = [&](int x, int y) { return s.at(clampi(x, 0, s.width - 1), clampi(y, 0, s.height - 1)); };

  const int w = h.width, ht = h.height;
  ElevationGrid mag(w, ht);
  Grid<uint8_t> sector(w, ht);
  for (int y = 0; y < ht; ++y)
    for (int x = 0; x < w; ++x) {
      const double gx = (px(x + 1, y - 1) + 2 * px(x + 1, y) + px(x + 1, y + 1) - px(x - 1, y - 1) - 2 * px(x - 1, y) -
                         px(x - 1, y + 1)) / 8.0;
      const double gy = (px(x - 1, y + 1) + 2 * px(x, y + 1) + px(x + 1, y + 1) - px(x - 1, y - 1) - 2 * px(x, y - 1) -
                         px(x + 1, y - 1)) / 8.0;
      mag.at(x, y) = std::hypot(gx, gy);
      double a = std::atan2(gy, gx) * 180.0 / M_PI;
      if (a < 0) a += 180.0;
      sector.at(x, y) = a < 22.5 || a >= 157.5 ? 0 : a < 67.5 ? 1 : a < 112.5 ? 2 : 3;
    }

  // Neighbour offsets along the gradient for each sector. A pixel survives if
  // it beats the "before" neighbour strictly and the "after" one or ties it,
  // so a symmetric plateau of maxima thins to one pixel.
  static const int kOff[4][2] = {{1, 0}, {1, 1}, {0, 1}, {-1, 1}};
  auto m = [&](int x, int y) { return mag.inside(x, y) ? mag.at(x, y) : 0.0; };
  Grid<uint8_t> level(w, ht, 0);  // 0 none, 1 weak, 2 strong
  for (int y = 0; y < ht; ++y)
    for (int x = 0; x < w; ++x) {
      const double v = mag.at(x, y);
      if (v < cfg.low) continue;
      const int dx = kOff[sector.at(x, y)][0], dy = kOff[sector.at(x, y)][1];
      if (!(v > m(x - dx, y - dy) && v >= m(x + dx, y + dy))) continue;
      level.at(x, y) = v >= cfg.high ? 2 : 1;
    }

  std::vector<int64_t> stack;
  for (size_t i = 0; i < level.size(); ++i)
    if (level.v[i] == 2) {
      out.v[i] = 1;
      stack.push_back(static_cast<int64_t>(i));
    }
  while (!stack.empty()) {
    const int64_t i = stack.back();
    stack.pop_back();
    const int x = static_cast<int>(i % w), y = static_cast<int>(i / w);
    for (int d = 0; d < 8; ++d) {
      const int nx = x + kDx[d], ny = y + kDy[d];
      if (!out.inside(nx, ny) || out.at(nx, ny) || level.at(nx, ny) == 0) continue;
      out.at(nx, ny) = 1;
      stack.push_back(static_cast<int64_t>(ny) * w + nx);
    }
  }
  return out;
}

}  // namespace terra::geomorph
