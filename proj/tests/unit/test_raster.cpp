#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "terra/core/rng.hpp"
#include "terra/raster/filters.hpp"
#include "terra/raster/hgt.hpp"
#include "terra/raster/io.hpp"
#include "terra/raster/normalize.hpp"
#include "terra/raster/patches.hpp"
#include "terra/raster/quantize.hpp"
#include "terra/raster/resample.hpp"

using namespace terra;
using namespace terra::raster;

namespace {

Heightmap random_heightmap(int w, int h, Rng& rng, double lo = 0, double hi = 2000) {
  std::vector<float> v(static_cast<size_t>(w) * h);
  for (float& x : v) x = static_cast<float>(rng.uniform(lo, hi));
  return Heightmap(w, h, std::move(v));
}

Texture random_texture(int w, int h, Rng& rng) {
  Texture t(w, h);
  for (auto& b : t.rgb) b = static_cast<uint8_t>(rng.below(256));
  return t;
}

}  // namespace

TEST_CASE("hgt: big-endian decode and length") {
  CHECK(kHgtBytes == 25934402u);
  std::vector<uint8_t> bytes(kHgtBytes, 0);
  bytes[0] = 0x00;
  bytes[1] = 0x64;
  bytes[2] = 0xff;
  bytes[3] = 0x9c;  // -100
  bytes[4] = 0x80;
  bytes[5] = 0x00;  // void
  const HgtTile t = parse_hgt(bytes);
  CHECK(t.heights.width == 3601);
  CHECK(t.heights.at(0, 0) == 100.0f);
  CHECK(t.heights.at(1, 0) == -100.0f);
  CHECK(t.void_mask[2] == 1);
  CHECK(t.void_count == 1);
}

TEST_CASE("hgt: errors") {
  CHECK_THROWS_AS(parse_hgt(std::vector<uint8_t>(100)), FormatError);
  std::vector<uint8_t> voids(kHgtBytes);
  for (size_t i = 0; i < voids.size(); i += 2) voids[i] = 0x80;
  CHECK_THROWS_AS(parse_hgt(voids), FormatError);
}

TEST_CASE("hgt: write then parse is the identity") {
  Rng rng(3);
  std::vector<float> v(static_cast<size_t>(kHgtSide) * kHgtSide);
  std::vector<uint8_t> mask(v.size(), 0);
  for (size_t i = 0; i < v.size(); ++i) {
    v[i] = static_cast<float>(static_cast<int>(rng.below(9000)) - 500);
    if (rng.below(1000) == 0) mask[i] = 1;
  }
  const Heightmap hm(kHgtSide, kHgtSide, v, 30.0);
  const auto bytes = write_hgt(hm, mask);
  const HgtTile t = parse_hgt(bytes);
  CHECK(t.void_mask == mask);
  for (size_t i = 0; i < v.size(); ++i)
    if (!mask[i]) REQUIRE(t.heights.elevations[i] == v[i]);
  CHECK(write_hgt(t.heights, t.void_mask) == bytes);
}

TEST_CASE("resample: identity, constants, hand-evaluated bilinear") {
  Rng rng(1);
  const Heightmap hm = random_heightmap(7, 5, rng);
  CHECK(resample_bilinear(hm, hm.resolution_m) == hm);

  const Heightmap flat(9, 9, 321.5f, 30.0);
  for (double target : {7.0, 25.0, 60.0}) {
    const Heightmap r = resample_bilinear(flat, target);
    CHECK(r.resolution_m == target);
    for (float x : r.elevations) CHECK(x == doctest::Approx(321.5));
  }

  const Heightmap small(2, 2, {0, 2, 2, 4}, 2.0);
  const Heightmap up = resample_bilinear(small, 1.0);
  REQUIRE(up.width == 3);
  REQUIRE(up.height == 3);
  CHECK(up.at(1, 1) == 2.0f);
  CHECK(up.at(1, 0) == 1.0f);
  CHECK(up.at(2, 2) == 4.0f);

  CHECK(resample_bilinear(Heightmap(4, 4, 0.0f, 30.0), 25.0).width == 4);
  CHECK(resample_bilinear(Heightmap(3601, 2, 0.0f, 30.0), 25.0).width == 4321);
  CHECK_THROWS_AS(resample_bilinear(small, 10.0), InvalidArgument);
  CHECK_THROWS_AS(resample_bilinear(small, 0.0), InvalidArgument);
}

TEST_CASE("patches: counts and margins") {
  CHECK(extract_patches(Heightmap(512, 512, 0.0f), Texture(512, 512)).size() == 4);
  CHECK(extract_patches(Heightmap(300, 300, 0.0f), Texture(300, 300)).size() == 1);
  CHECK(extract_patches(Heightmap(4096, 4096, 0.0f), Texture(4096, 4096)).size() == 256);
  CHECK_THROWS_AS(extract_patches(Heightmap(200, 300, 0.0f), Texture(200, 300)), InvalidArgument);
  CHECK_THROWS_AS(extract_patches(Heightmap(300, 300, 0.0f), Texture(301, 300)), InvalidArgument);
}

TEST_CASE("patches: tiles reconstruct the cropped grid") {
  Rng rng(5);
  const int w = 37, h = 29, p = 8;
  const Heightmap hm = random_heightmap(w, h, rng);
  const Texture tex = random_texture(w, h, rng);
  const auto tiles = extract_patches(hm, tex, p);
  const int nx = w / p, ny = h / p;
  REQUIRE(tiles.size() == static_cast<size_t>(nx * ny));
  std::vector<int> covered(static_cast<size_t>(w) * h, 0);
  for (int ty = 0; ty < ny; ++ty)
    for (int tx = 0; tx < nx; ++tx) {
      const TerrainPair& t = tiles[static_cast<size_t>(ty * nx + tx)];
      for (int y = 0; y < p; ++y)
        for (int x = 0; x < p; ++x) {
          const int sx = tx * p + x, sy = ty * p + y;
          ++covered[static_cast<size_t>(sy) * w + sx];
          REQUIRE(t.height.at(x, y) == hm.at(sx, sy));
          for (int c = 0; c < 3; ++c) REQUIRE(t.texture.at(x, y, c) == tex.at(sx, sy, c));
        }
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) CHECK(covered[static_cast<size_t>(y) * w + x] == (x < nx * p && y < ny * p ? 1 : 0));
}

TEST_CASE("patches: tiles with voids are dropped") {
  std::vector<uint8_t> mask(16 * 16, 0);
  mask[3 * 16 + 12] = 1;  // top-right tile
  const auto tiles = extract_patches(Heightmap(16, 16, 1.0f), Texture(16, 16), 8, mask);
  CHECK(tiles.size() == 3);
}

TEST_CASE("upsample: constants, extents, flip commutation") {
  const TerrainPair flat{Heightmap(256, 256, 700.0f), Texture(256, 256, std::vector<uint8_t>(256 * 256 * 3, 90))};
  const TerrainPair up = upsample_patch(flat);
  CHECK(up.height.width == 512);
  CHECK(up.texture.height == 512);
  CHECK(std::all_of(up.height.elevations.begin(), up.height.elevations.end(), [](float v) { return v == 700.0f; }));
  CHECK(std::all_of(up.texture.rgb.begin(), up.texture.rgb.end(), [](uint8_t v) { return v == 90; }));

  Rng rng(11);
  const int n = 24;
  TerrainPair pair{random_heightmap(n, n, rng), random_texture(n, n, rng)};
  auto flip = [](const TerrainPair& p) {
    TerrainPair f = p;
    for (int y = 0; y < p.height.height; ++y)
      for (int x = 0; x < p.height.width; ++x) {
        f.height.at(x, y) = p.height.at(p.height.width - 1 - x, y);
        for (int c = 0; c < 3; ++c) f.texture.at(x, y, c) = p.texture.at(p.texture.width - 1 - x, y, c);
      }
    return f;
  };
  const TerrainPair a = upsample_patch(flip(pair), 53);
  const TerrainPair b = flip(upsample_patch(pair, 53));
  for (size_t i = 0; i < a.height.size(); ++i) CHECK(a.height.elevations[i] == doctest::Approx(b.height.elevations[i]).epsilon(1e-5));
  int max_diff = 0;
  for (size_t i = 0; i < a.texture.rgb.size(); ++i)
    max_diff = std::max(max_diff, std::abs(int(a.texture.rgb[i]) - int(b.texture.rgb[i])));
  CHECK(max_diff <= 1);
}

TEST_CASE("normalize: endpoints, midpoint, inverse, range errors") {
  CHECK(normalize_elevation(0) == -1.0);
  CHECK(normalize_elevation(2000) == 1.0);
  CHECK(normalize_elevation(1000) == 0.0);
  CHECK(normalize_elevation(8000, {8000}) == 1.0);
  CHECK_THROWS_AS(normalize_elevation(-0.5), InvalidArgument);
  CHECK_THROWS_AS(normalize_elevation(2000.5), InvalidArgument);
  CHECK_THROWS_AS(normalize_elevation(1, {0}), InvalidArgument);

  Rng rng(2);
  const Heightmap hm = random_heightmap(64, 64, rng);
  const auto n = normalize_height(hm);
  for (float v : n) REQUIRE((v >= -1.0f && v <= 1.0f));
  const Heightmap back = denormalize_height(n, 64, 64);
  for (size_t i = 0; i < hm.size(); ++i) REQUIRE(std::abs(back.elevations[i] - hm.elevations[i]) <= 1e-3);
}

TEST_CASE("elevation filter is inclusive at the limit") {
  std::vector<TerrainPair> pairs;
  pairs.push_back({Heightmap(4, 4, 0.0f), Texture(4, 4)});
  Heightmap peak(4, 4, 10.0f);
  peak.at(2, 2) = 2001.0f;
  pairs.push_back({peak, Texture(4, 4)});
  peak.at(2, 2) = 2000.0f;
  pairs.push_back({peak, Texture(4, 4)});
  const auto kept = elevation_filter(pairs);
  REQUIRE(kept.size() == 2);
  CHECK(kept[0].height.max_elevation() == 0.0f);
  CHECK(kept[1].height.max_elevation() == 2000.0f);
}

TEST_CASE("region filter predicates") {
  RegionMetadata ok{500, 0.1, Climate::kTemperate, {}};
  CHECK(region_filter(ok).accepted);

  RegionMetadata m = ok;
  m.mean_elevation_m = 50;
  CHECK(region_filter(m).reason == RejectReason::kLowElevation);
  m = ok;
  m.mean_elevation_m = 100;
  CHECK(region_filter(m).accepted);
  m = ok;
  m.human_modification = 0.3;
  CHECK(region_filter(m).reason == RejectReason::kHumanModification);
  m.human_modification = 0.299;
  CHECK(region_filter(m).accepted);
  m = ok;
  m.climate = Climate::kArid;
  CHECK(region_filter(m).reason == RejectReason::kClimate);
  for (Climate c : {Climate::kTropical, Climate::kSubarctic, Climate::kPolar}) {
    m.climate = c;
    CHECK(region_filter(m).accepted);
  }
  m = ok;
  m.landcover.cropland = true;
  CHECK(region_filter(m).reason == RejectReason::kCropland);
  m = ok;
  m.landcover.built_up = true;
  CHECK(region_filter(m).reason == RejectReason::kBuiltUp);
  m = ok;
  m.landcover.water = true;
  CHECK(region_filter(m).reason == RejectReason::kWater);
  m = ok;
  m.landcover.cloud = true;
  CHECK(region_filter(m).reason == RejectReason::kCloud);
  m = ok;
  m.human_modification = 1.5;
  CHECK_THROWS_AS(region_filter(m), InvalidArgument);
  CHECK(to_string(RejectReason::kLowElevation) == "low elevation");
}

TEST_CASE("region selector caps each climate at 125") {
  RegionSelector sel;
  RegionMetadata t{500, 0.1, Climate::kTemperate, {}};
  RegionMetadata p{500, 0.1, Climate::kPolar, {}};
  int accepted = 0;
  for (int i = 0; i < 200; ++i) accepted += sel.offer(t).accepted;
  CHECK(accepted == 125);
  CHECK(sel.offer(t).reason == RejectReason::kCategoryFull);
  CHECK(sel.offer(p).accepted);
  CHECK(sel.accepted(Climate::kPolar) == 1);
}

TEST_CASE("two-color quantization: halves and constant") {
  Texture t(8, 4);
  for (int y = 0; y < 4; ++y)
    for (int x = 4; x < 8; ++x)
      for (int c = 0; c < 3; ++c) t.at(x, y, c) = 255;
  const auto r = quantize_two_color(t);
  CHECK_FALSE(r.degenerate);
  CHECK(r.colors[0] == Rgb{0, 0, 0});
  CHECK(r.colors[1] == Rgb{255, 255, 255});
  CHECK(r.image == t);

  const auto d = quantize_two_color(Texture(5, 5, std::vector<uint8_t>(75, 42)));
  CHECK(d.degenerate);
  CHECK(d.colors[0] == Rgb{42, 42, 42});
  CHECK(d.colors[1] == d.colors[0]);
}

TEST_CASE("two-color quantization beats any single color and is near the exhaustive optimum") {
  for (uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const int k = 2 + static_cast<int>(rng.below(15));
    std::vector<Rgb> palette(k);
    for (auto& c : palette)
      for (auto& v : c) v = static_cast<uint8_t>(rng.below(256));
    Texture t(16, 16);
    for (size_t i = 0; i < t.pixel_count(); ++i) {
      const Rgb& c = palette[rng.below(k)];
      std::copy(c.begin(), c.end(), t.rgb.begin() + static_cast<std::ptrdiff_t>(i * 3));
    }
    const auto r = quantize_two_color(t);
    if (r.degenerate) continue;
    const double err2 = quantization_error(t, r.image);

    // Best single color: the (real-valued) mean.
    double mean[3] = {};
    for (size_t i = 0; i < t.pixel_count(); ++i)
      for (int c = 0; c < 3; ++c) mean[c] += t.rgb[i * 3 + c];
    double err1 = 0;
    for (int c = 0; c < 3; ++c) mean[c] /= static_cast<double>(t.pixel_count());
    for (size_t i = 0; i < t.pixel_count(); ++i)
      for (int c = 0; c < 3; ++c) err1 += std::pow(t.rgb[i * 3 + c] - mean[c], 2);
    CHECK(err2 <= err1);

    // Exhaustive 2-partition of the palette pixels (real-valued centroids).
    std::vector<std::array<double, 4>> hist;  // r, g, b, count
    for (size_t i = 0; i < t.pixel_count(); ++i) {
      auto it = std::find_if(hist.begin(), hist.end(), [&](const auto& h) {
        return h[0] == t.rgb[i * 3] && h[1] == t.rgb[i * 3 + 1] && h[2] == t.rgb[i * 3 + 2];
      });
      if (it == hist.end()) hist.push_back({double(t.rgb[i * 3]), double(t.rgb[i * 3 + 1]), double(t.rgb[i * 3 + 2]), 1});
      else (*it)[3] += 1;
    }
    double best = 1e300;
    const size_t m = hist.size();
    for (uint32_t mask = 1; mask < (1u << m) - 1; ++mask) {
      double s[2][3] = {}, w[2] = {};
      for (size_t i = 0; i < m; ++i) {
        const int g = (mask >> i) & 1;
        for (int c = 0; c < 3; ++c) s[g][c] += hist[i][c] * hist[i][3];
        w[g] += hist[i][3];
      }
      double e = 0;
      for (size_t i = 0; i < m; ++i) {
        const int g = (mask >> i) & 1;
        for (int c = 0; c < 3; ++c) e += hist[i][3] * std::pow(hist[i][c] - s[g][c] / w[g], 2);
      }
      best = std::min(best, e);
    }
    // Centroid rounding to 8 bits costs at most 0.25 per channel per pixel.
    CHECK(err2 >= best - 1e-6);
    CHECK(err2 <= err1);
  }
}

TEST_CASE("two-color quantization with many colors uses the sweep initializer") {
  Rng rng(9);
  const Texture t = random_texture(64, 64, rng);
  const auto a = quantize_two_color(t);
  const auto b = quantize_two_color(t);
  CHECK(a.image == b.image);
  CHECK(a.colors == b.colors);
}

TEST_CASE("png: heightmap and texture round-trips") {
  Rng rng(4);
  Heightmap hm(13, 7, 0.0f);
  for (float& v : hm.elevations) v = static_cast<float>(rng.below(2001));
  const auto bytes = encode_heightmap_png(hm);
  const Heightmap back = decode_heightmap_png(bytes);
  CHECK(back == hm);
  const auto img = decode_png(bytes);
  CHECK(img.bit_depth == 16);
  CHECK(img.channels == 1);

  const Texture tex = random_texture(9, 11, rng);
  CHECK(decode_texture_png(encode_texture_png(tex)) == tex);
  CHECK(encode_texture_png(tex) == encode_texture_png(tex));

  CHECK_THROWS_AS(decode_png(std::vector<uint8_t>{1, 2, 3}), FormatError);
  auto trunc = encode_texture_png(tex);
  trunc.resize(trunc.size() / 2);
  CHECK_THROWS_AS(decode_texture_png(trunc), FormatError);
  CHECK_THROWS_AS(decode_texture_png(bytes), FormatError);
  Heightmap neg(2, 2, -3.0f);
  CHECK_THROWS_AS(encode_heightmap_png(neg), InvalidArgument);
}

TEST_CASE("texture unit range conversion") {
  Rng rng(6);
  const Texture t = random_texture(5, 4, rng);
  const auto u = texture_to_unit(t);
  for (float v : u) REQUIRE((v >= -1.0f && v <= 1.0f));
  CHECK(texture_from_unit(u, 5, 4) == t);
}

TEST_CASE("sidecar json and atomic file writes") {
  const Sidecar s{25.0, "tile_N35E138", 1834.0};
  const Sidecar r = sidecar_from_json(sidecar_to_json(s));
  CHECK(r.resolution_m == 25.0);
  CHECK(r.source_id == "tile_N35E138");
  CHECK(r.max_elevation_m == 1834.0);
  CHECK_THROWS_AS(sidecar_from_json("{}"), FormatError);

  const auto dir = std::filesystem::temp_directory_path() / "terra_raster_test";
  std::filesystem::remove_all(dir);
  write_file_atomic(dir / "a" / "x.json", std::string("hello"));
  const auto bytes = read_file(dir / "a" / "x.json");
  CHECK(std::string(bytes.begin(), bytes.end()) == "hello");
  CHECK_FALSE(std::filesystem::exists(dir / "a" / "x.json.tmp"));
  std::filesystem::remove_all(dir);
}
