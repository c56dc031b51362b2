#include "terra/synthterra/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "terra/core/parallel.hpp"
#include "terra/core/rng.hpp"

namespace terra::synth {
namespace {

double lattice(uint64_t seed, int octave, int64_t ix, int64_t iy) {
  const uint64_t h = mix64(seed ^ mix64(static_cast<uint64_t>(octave) * 0x9e37 + mix64(ix * 0x1f1f1f1f + iy)));
  return static_cast<double>(h >> 11) * 0x1.0p-53 * 2.0 - 1.0;
}

double smooth(double t) { return t * t * (3.0 - 2.0 * t); }

double value_noise(uint64_t seed, int octave, double x, double y) {
  const double fx = std::floor(x), fy = std::floor(y);
  const auto ix = static_cast<int64_t>(fx), iy = static_cast<int64_t>(fy);
  const double tx = smooth(x - fx), ty = smooth(y - fy);
  const double a = lattice(seed, octave, ix, iy), b = lattice(seed, octave, ix + 1, iy);
  const double c = lattice(seed, octave, ix, iy + 1), d = lattice(seed, octave, ix + 1, iy + 1);
  return (a + (b - a) * tx) * (1 - ty) + (c + (d - c) * tx) * ty;
}

uint8_t to_byte(double v) { return static_cast<uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

std::string pair_id(int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d", i);
  return buf;
}

nlohmann::json rgb_json(const raster::Rgb& c) { return {c[0], c[1], c[2]}; }

raster::Rgb rgb_from(const nlohmann::json& j) {
  return {j.at(0).get<uint8_t>(), j.at(1).get<uint8_t>(), j.at(2).get<uint8_t>()};
}

}  // namespace

void SynthConfig::validate() const {
  if (size_px < 16) throw InvalidArgument("synthetic size must be at least 16 px");
  if (octaves < 1) throw InvalidArgument("octaves must be >= 1");
  if (!(persistence > 0.0 && persistence < 1.0)) throw InvalidArgument("persistence must lie in (0, 1)");
  if (!(correlation_strength >= 0.0 && correlation_strength <= 1.0))
    throw InvalidArgument("correlation_strength must lie in [0, 1]");
  if (!(base_frequency > 0.0) || !(elevation_scale > 0.0) || !(resolution_m > 0.0) || !(slope_scale_m > 0.0))
    throw InvalidArgument("synthetic frequency, scale and resolution must be positive");
}

nlohmann::json to_json(const SynthConfig& c) {
  return {{"seed", c.seed},
          {"size_px", c.size_px},
          {"octaves", c.octaves},
          {"persistence", c.persistence},
          {"base_frequency", c.base_frequency},
          {"elevation_scale", c.elevation_scale},
          {"resolution_m", c.resolution_m},
          {"palette", {{"low", rgb_json(c.palette.low)}, {"high", rgb_json(c.palette.high)}, {"slope", rgb_json(c.palette.slope)}}},
          {"correlation_strength", c.correlation_strength},
          {"slope_weight", c.slope_weight},
          {"slope_scale_m", c.slope_scale_m}};
}

SynthConfig synth_config_from_json(const nlohmann::json& j, SynthConfig c) {
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("seed", c.seed);
  get("size_px", c.size_px);
  get("octaves", c.octaves);
  get("persistence", c.persistence);
  get("base_frequency", c.base_frequency);
  get("elevation_scale", c.elevation_scale);
  get("resolution_m", c.resolution_m);
  get("correlation_strength", c.correlation_strength);
  get("slope_weight", c.slope_weight);
  get("slope_scale_m", c.slope_scale_m);
  if (j.contains("palette")) {
    const auto& p = j.at("palette");
    if (p.contains("low")) c.palette.low = rgb_from(p.at("low"));
    if (p.contains("high")) c.palette.high = rgb_from(p.at("high"));
    if (p.contains("slope")) c.palette.slope = rgb_from(p.at("slope"));
  }
  c.validate();
  return c;
}

raster::Heightmap fbm_heightmap(const SynthConfig& cfg) {
  cfg.validate();
  const int n = cfg.size_px;
  raster::Heightmap hm(n, n, 0.0f, cfg.resolution_m);
  double norm = 0, amp = 1;
  for (int o = 0; o < cfg.octaves; ++o, amp *= cfg.persistence) norm += amp;
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      double v = 0, a = 1, f = cfg.base_frequency / n;
      for (int o = 0; o < cfg.octaves; ++o, a *= cfg.persistence, f *= 2) v += a * value_noise(cfg.seed, o, x * f, y * f);
      const double h = cfg.elevation_scale * (0.5 + 0.5 * v / norm);
      hm.at(x, y) = static_cast<float>(std::clamp(h, 0.0, 2000.0));
    }
  return hm;
}

raster::Texture correlated_texture(const raster::Heightmap& hm, const SynthConfig& cfg) {
  cfg.validate();
  if (hm.min_elevation() < 0.0f || hm.max_elevation() > 2000.0f)
    throw InvalidArgument("correlated_texture expects elevations in [0, 2000] m");
  const float lo = hm.min_elevation(), hi = hm.max_elevation();
  const double span = hi > lo ? hi - lo : 1.0;
  Rng rng = Rng::substream(cfg.seed, "texture");
  raster::Texture tex(hm.width, hm.height);
  const auto& p = cfg.palette;
  for (int y = 0; y < hm.height; ++y)
    for (int x = 0; x < hm.width; ++x) {
      const double e = (hm.at(x, y) - lo) / span;
      const int x0 = std::max(x - 1, 0), x1 = std::min(x + 1, hm.width - 1);
      const int y0 = std::max(y - 1, 0), y1 = std::min(y + 1, hm.height - 1);
      const double gx = (hm.at(x1, y) - hm.at(x0, y)) / std::max(1, x1 - x0);
      const double gy = (hm.at(x, y1) - hm.at(x, y0)) / std::max(1, y1 - y0);
      const double s = cfg.slope_weight * std::min(1.0, std::hypot(gx, gy) / cfg.slope_scale_m);
      for (int c = 0; c < 3; ++c) {
        const double base = p.low[c] + (p.high[c] - p.low[c]) * e;
        const double structured = base + (p.slope[c] - base) * s;
        const double noise = rng.uniform(0.0, 255.0);
        tex.at(x, y, c) = to_byte(cfg.correlation_strength * structured + (1.0 - cfg.correlation_strength) * noise);
      }
    }
  return tex;
}

raster::TerrainPair generate_pair(const SynthConfig& cfg, uint64_t index) {
  SynthConfig c = cfg;
  c.seed = substream_seed(cfg.seed, "dataset", index);
  raster::Heightmap hm = fbm_heightmap(c);
  for (float& v : hm.elevations) v = std::round(v);
  raster::Texture tex = correlated_texture(hm, c);
  return {std::move(hm), std::move(tex)};
}

void build_synthetic_dataset(const std::filesystem::path& dir, int n, const SynthConfig& cfg,
                             const BuildOptions& opts) {
  if (n < 0) throw InvalidArgument("dataset size must be non-negative");
  cfg.validate();
  namespace fs = std::filesystem;
  for (const char* sub : {"heightmaps", "textures", "sketches", "sidecars"}) fs::create_directories(dir / sub);

  parallel_for(static_cast<size_t>(n), opts.threads, [&](size_t i) {
    const std::string id = pair_id(static_cast<int>(i));
    const raster::TerrainPair pair = generate_pair(cfg, i);
    raster::write_file_atomic(dir / "heightmaps" / (id + ".png"), raster::encode_heightmap_png(pair.height));
    raster::write_file_atomic(dir / "textures" / (id + ".png"), raster::encode_texture_png(pair.texture));
    raster::write_file_atomic(dir / "sketches" / (id + ".png"),
                              raster::encode_texture_png(geomorph::extract_sketch(pair.height, opts.sketch).sketch));
    const raster::Sidecar side{cfg.resolution_m, "synth:" + std::to_string(cfg.seed) + ":" + id,
                               pair.height.max_elevation()};
    raster::write_file_atomic(dir / "sidecars" / (id + ".json"), raster::sidecar_to_json(side));
  });

  nlohmann::json pairs = nlohmann::json::array();
  for (int i = 0; i < n; ++i) {
    const std::string id = pair_id(i);
    pairs.push_back({{"id", id},
                     {"heightmap", "heightmaps/" + id + ".png"},
                     {"texture", "textures/" + id + ".png"},
                     {"sketch", "sketches/" + id + ".png"},
                     {"sidecar", "sidecars/" + id + ".json"}});
  }
  const nlohmann::json manifest{{"format", "terrafusion-dataset"}, {"version", 1}, {"count", n},
                                {"config", to_json(cfg)}, {"pairs", pairs}};
  raster::write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

std::vector<DatasetEntry> load_dataset(const std::filesystem::path& dir) {
  const auto bytes = raster::read_file(dir / "manifest.json");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("bad dataset manifest: " + std::string(e.what()));
  }
  std::vector<DatasetEntry> out;
  for (const auto& p : manifest.at("pairs")) {
    DatasetEntry e;
    e.id = p.at("id").get<std::string>();
    const std::string side_path = p.value("sidecar", "");
    if (!side_path.empty() && std::filesystem::exists(dir / side_path)) {
      const auto sb = raster::read_file(dir / side_path);
      e.sidecar = raster::sidecar_from_json(std::string(sb.begin(), sb.end()));
    }
    e.pair.height = raster::decode_heightmap_png(raster::read_file(dir / p.at("heightmap").get<std::string>()),
                                                 e.sidecar.resolution_m);
    e.pair.texture = raster::decode_texture_png(raster::read_file(dir / p.at("texture").get<std::string>()));
    if (e.pair.texture.width != e.pair.height.width || e.pair.texture.height != e.pair.height.height)
      throw FormatError("pair " + e.id + ": heightmap and texture sizes differ");
    const std::string sk = p.value("sketch", "");
    if (!sk.empty() && std::filesystem::exists(dir / sk)) e.sketch = raster::decode_texture_png(raster::read_file(dir / sk));
    out.push_back(std::move(e));
  }
  return out;
}

void extract_dataset_sketches(const std::filesystem::path& dir, const geomorph::SketchConfig& cfg, int threads) {
  const auto bytes = raster::read_file(dir / "manifest.json");
  nlohmann::json manifest = nlohmann::json::parse(bytes.begin(), bytes.end());
  auto& pairs = manifest.at("pairs");
  std::filesystem::create_directories(dir / "sketches");
  parallel_for(pairs.size(), threads, [&](size_t i) {
    const auto& p = pairs[i];
    const std::string id = p.at("id").get<std::string>();
    const raster::Heightmap hm = raster::decode_heightmap_png(raster::read_file(dir / p.at("heightmap").get<std::string>()));
    raster::write_file_atomic(dir / "sketches" / (id + ".png"),
                              raster::encode_texture_png(geomorph::extract_sketch(hm, cfg).sketch));
  });
  for (auto& p : pairs) p["sketch"] = "sketches/" + p.at("id").get<std::string>() + ".png";
  raster::write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

}  // namespace terra::synth
