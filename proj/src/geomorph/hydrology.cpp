#include "terra/geomorph/hydrology.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <queue>

namespace terra::geomorph {

ElevationGrid to_grid(const raster::Heightmap& hm) {
  return ElevationGrid(hm.width, hm.height, std::vector<double>(hm.elevations.begin(), hm.elevations.end()));
}

ElevationGrid fill_depressions(const ElevationGrid& h, double epsilon) {
  if (!(epsilon >= 0.0)) throw InvalidArgument("fill epsilon must be non-negative");
  for (double v : h.v)
    if (!std::isfinite(v)) throw InvalidArgument("fill_depressions: non-finite elevation");

  ElevationGrid w = h;
  std::vector<uint8_t> closed(h.size(), 0);
  using Item = std::pair<double, int64_t>;  // (level, index); index breaks ties deterministically
  std::priority_queue<Item, std::vector<Item>, std::greater<>> open;
  for (int y = 0; y < h.height; ++y)
    for (int x = 0; x < h.width; ++x)
      if (h.on_border(x, y)) {
        const int64_t i = static_cast<int64_t>(y) * h.width + x;
        closed[i] = 1;
        open.emplace(h.v[i], i);
      }

  while (!open.empty()) {
    const auto [level, i] = open.top();
    open.pop();
    const int cx = static_cast<int>(i % h.width), cy = static_cast<int>(i / h.width);
    for (int d = 0; d < 8; ++d) {
      const int nx = cx + kDx[d], ny = cy + kDy[d];
      if (!h.inside(nx, ny)) continue;
      const int64_t n = static_cast<int64_t>(ny) * h.width + nx;
      if (closed[n]) continue;
      closed[n] = 1;
      w.v[n] = std::max(h.v[n], level + epsilon);
      open.emplace(w.v[n], n);
    }
  }
  return w;
}

FlowResult flow_accumulation_d8(const ElevationGrid& f) {
  static const double kDist[8] = {1, std::sqrt(2.0), 1, std::sqrt(2.0), 1, std::sqrt(2.0), 1, std::sqrt(2.0)};
  FlowResult r{Grid<Direction>(f.width, f.height, Direction::kNone), Grid<int64_t>(f.width, f.height, 1)};
  std::vector<int64_t> target(f.size(), -1);
  std::vector<int32_t> indegree(f.size(), 0);
  for (int y = 0; y < f.height; ++y)
    for (int x = 0; x < f.width; ++x) {
      double best = 0.0;
      int best_d = -1;
      for (int d = 0; d < 8; ++d) {
        const int nx = x + kDx[d], ny = y + kDy[d];
        if (!f.inside(nx, ny)) continue;
        const double drop = (f.at(x, y) - f.at(nx, ny)) / kDist[d];
        if (drop > best) best = drop, best_d = d;
      }
      if (best_d < 0) continue;
      const size_t i = static_cast<size_t>(y) * f.width + x;
      r.direction.v[i] = static_cast<Direction>(best_d);
      target[i] = static_cast<int64_t>(y + kDy[best_d]) * f.width + (x + kDx[best_d]);
      ++indegree[target[i]];
    }

  std::deque<int64_t> ready;
  for (size_t i = 0; i < f.size(); ++i)
    if (indegree[i] == 0) ready.push_back(static_cast<int64_t>(i));
  size_t processed = 0;
  while (!ready.empty()) {
    const int64_t i = ready.front();
    ready.pop_front();
    ++processed;
    const int64_t t = target[i];
    if (t < 0) continue;
    r.accumulation.v[t] += r.accumulation.v[i];
    if (--indegree[t] == 0) ready.push_back(t);
  }
  if (processed != f.size()) throw NumericError("flow graph contains a cycle; was the input depression-filled?");
  return r;
}

ChannelResult extract_channels(const ElevationGrid& h, ChannelMode mode, double percentile_threshold,
                               double epsilon) {
  if (!(percentile_threshold > 0.0 && percentile_threshold < 100.0))
    throw InvalidArgument("channel threshold percentile must lie in (0, 100)");
  ChannelResult res{Mask(h.width, h.height, 0), 0.0, false};
  const auto [lo, hi] = std::minmax_element(h.v.begin(), h.v.end());
  if (*lo == *hi) {
    res.degenerate = true;
    return res;
  }
  ElevationGrid src = h;
  if (mode == ChannelMode::kRidge)
    for (double& v : src.v) v = *hi - v;
  const FlowResult flow = flow_accumulation_d8(fill_depressions(src, epsilon));
  res.threshold = percentile(std::vector<double>(flow.accumulation.v.begin(), flow.accumulation.v.end()),
                             percentile_threshold);
  for (size_t i = 0; i < h.size(); ++i) res.mask.v[i] = static_cast<double>(flow.accumulation.v[i]) >= res.threshold;
  return res;
}

}  // namespace terra::geomorph
