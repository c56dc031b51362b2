#include "terra/raster/quantize.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace terra::raster {
namespace {

struct Color {
  double v[3];
  double weight;
};

double dist2(const double* a, const double* b) {
  double s = 0;
  for (int c = 0; c < 3; ++c) s += (a[c] - b[c]) * (a[c] - b[c]);
  return s;
}

size_t farthest_from(const std::vector<Color>& cs, size_t from) {
  size_t best = from;
  double bd = -1;
  for (size_t i = 0; i < cs.size(); ++i) {
    const double d = dist2(cs[i].v, cs[from].v);
    if (d > bd) bd = d, best = i;
  }
  return best;
}

double luminance(const double* v) { return 0.299 * v[0] + 0.587 * v[1] + 0.114 * v[2]; }

}  // namespace

TwoColorResult quantize_two_color(const Texture& tex, const QuantizeConfig& cfg) {
  if (tex.pixel_count() == 0) throw InvalidArgument("empty texture");
  std::map<uint32_t, size_t> hist;
  for (size_t i = 0; i < tex.pixel_count(); ++i) {
    const uint32_t key = uint32_t(tex.rgb[i * 3]) << 16 | uint32_t(tex.rgb[i * 3 + 1]) << 8 | tex.rgb[i * 3 + 2];
    ++hist[key];
  }
  std::vector<Color> colors;
  colors.reserve(hist.size());
  for (auto [key, n] : hist)
    colors.push_back({{double(key >> 16), double(key >> 8 & 0xff), double(key & 0xff)}, static_cast<double>(n)});

  TwoColorResult res;
  if (colors.size() == 1) {
    const Rgb c{tex.rgb[0], tex.rgb[1], tex.rgb[2]};
    res.image = tex;
    res.colors = {c, c};
    res.degenerate = true;
    return res;
  }

  size_t ia = 0, ib = 1;
  if (colors.size() <= cfg.exact_init_limit) {
    double bd = -1;
    for (size_t i = 0; i < colors.size(); ++i)
      for (size_t j = i + 1; j < colors.size(); ++j) {
        const double d = dist2(colors[i].v, colors[j].v);
        if (d > bd) bd = d, ia = i, ib = j;
      }
  } else {
    ia = farthest_from(colors, 0);
    ib = farthest_from(colors, ia);
  }

  double cent[2][3];
  std::copy_n(colors[ia].v, 3, cent[0]);
  std::copy_n(colors[ib].v, 3, cent[1]);
  std::vector<uint8_t> assign(colors.size(), 0);
  for (int it = 0; it < cfg.max_iterations; ++it) {
    bool changed = it == 0;
    for (size_t i = 0; i < colors.size(); ++i) {
      const uint8_t a = dist2(colors[i].v, cent[1]) < dist2(colors[i].v, cent[0]) ? 1 : 0;
      if (a != assign[i]) changed = true;
      assign[i] = a;
    }
    if (!changed) break;
    double sum[2][3] = {}, w[2] = {};
    for (size_t i = 0; i < colors.size(); ++i) {
      for (int c = 0; c < 3; ++c) sum[assign[i]][c] += colors[i].v[c] * colors[i].weight;
      w[assign[i]] += colors[i].weight;
    }
    for (int k = 0; k < 2; ++k)
      if (w[k] > 0)
        for (int c = 0; c < 3; ++c) cent[k][c] = sum[k][c] / w[k];
  }

  const int dark = luminance(cent[0]) <= luminance(cent[1]) ? 0 : 1;
  for (int k = 0; k < 2; ++k) {
    const int src = k == 0 ? dark : 1 - dark;
    for (int c = 0; c < 3; ++c)
      res.colors[k][c] = static_cast<uint8_t>(std::clamp(std::lround(cent[src][c]), 0L, 255L));
  }
  res.image = Texture(tex.width, tex.height);
  for (size_t i = 0; i < tex.pixel_count(); ++i) {
    const double px[3] = {double(tex.rgb[i * 3]), double(tex.rgb[i * 3 + 1]), double(tex.rgb[i * 3 + 2])};
    const int k = dist2(px, cent[1]) < dist2(px, cent[0]) ? 1 : 0;
    const Rgb& out = res.colors[k == dark ? 0 : 1];
    std::copy(out.begin(), out.end(), res.image.rgb.begin() + static_cast<std::ptrdiff_t>(i * 3));
  }
  return res;
}

double quantization_error(const Texture& original, const Texture& quantized) {
  if (original.rgb.size() != quantized.rgb.size()) throw InvalidArgument("texture sizes differ");
  double s = 0;
  for (size_t i = 0; i < original.rgb.size(); ++i) {
    const double d = double(original.rgb[i]) - double(quantized.rgb[i]);
    s += d * d;
  }
  return s;
}

}  // namespace terra::raster
