#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "terra/autodiff/batch.hpp"
#include "terra/metrics/metrics.hpp"
#include "terra/raster/io.hpp"
#include "terra/synthterra/synth.hpp"

using namespace terra;
using namespace terra::metrics;

namespace {

// Textbook single-pass formula, evaluated independently of the library.
double textbook_r(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  long double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += (long double)x[i] * x[i];
    syy += (long double)y[i] * y[i];
    sxy += (long double)x[i] * y[i];
  }
  const long double cov = sxy - sx * sy / n, vx = sxx - sx * sx / n, vy = syy - sy * sy / n;
  return static_cast<double>(cov / std::sqrt(vx * vy));
}

std::vector<TerrainPair> synthetic_pairs(int n, int size = 32, double strength = 0.9) {
  synth::SynthConfig c;
  c.seed = 12;
  c.size_px = size;
  c.correlation_strength = strength;
  std::vector<TerrainPair> out;
  for (int i = 0; i < n; ++i) out.push_back(synth::generate_pair(c, static_cast<uint64_t>(i)));
  return out;
}

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("terra_metrics_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("pearson matches the textbook formula to 1e-12") {
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> x(200 + trial), y(x.size());
    for (size_t i = 0; i < x.size(); ++i) {
      x[i] = rng.normal(100.0, 30.0);
      y[i] = 0.4 * x[i] + rng.normal(0.0, 20.0);
    }
    CHECK(std::abs(pearson(x, y) - textbook_r(x, y)) < 1e-12);
  }
  const std::vector<double> c(10, 2.0), v{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  CHECK_THROWS_AS(pearson(c, v), NumericError);
  CHECK_THROWS_AS(pearson(v, std::vector<double>(9, 1.0)), InvalidArgument);
}

TEST_CASE("pearson_corr_pair: affine channels give +1 and -1") {
  const int w = 16, h = 8;
  Heightmap hm(w, h, 0.0f);
  Texture up(w, h), down(w, h);
  for (int i = 0; i < w * h; ++i) {
    const int k = (i * 37) % 101;
    hm.elevations[i] = 2.0f * k + 7.0f;
    for (int c = 0; c < 3; ++c) {
      up.rgb[i * 3 + c] = static_cast<uint8_t>(k + 50 * c);
      down.rgb[i * 3 + c] = static_cast<uint8_t>(255 - k - 40 * c);
    }
  }
  CHECK(pearson_corr_pair(hm, up) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(pearson_corr_pair(hm, down) == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK_THROWS_AS(pearson_corr_pair(Heightmap(w, h, 3.0f), up), NumericError);
  Texture flat = up;
  for (int i = 0; i < w * h; ++i) flat.rgb[i * 3 + 1] = 9;
  CHECK_THROWS_AS(pearson_corr_pair(hm, flat), NumericError);
  CHECK_THROWS_AS(pearson_corr_pair(hm, Texture(w, h + 1)), InvalidArgument);
}

TEST_CASE("pearson_corr_pair: independent random 64x64 pairs stay below 0.1") {
  for (uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(substream_seed(seed, "test"));
    Heightmap hm(64, 64, 0.0f);
    Texture tex(64, 64);
    for (float& v : hm.elevations) v = static_cast<float>(rng.uniform(0, 2000));
    for (uint8_t& v : tex.rgb) v = static_cast<uint8_t>(rng.below(256));
    // The channel average is itself a mean of three direct-formula coefficients.
    std::vector<double> hv(hm.elevations.begin(), hm.elevations.end()), ch(hv.size());
    double oracle = 0;
    for (int c = 0; c < 3; ++c) {
      for (size_t i = 0; i < ch.size(); ++i) ch[i] = tex.rgb[i * 3 + c];
      oracle += textbook_r(hv, ch) / 3.0;
    }
    const double r = pearson_corr_pair(hm, tex);
    CHECK(std::abs(r - oracle) < 1e-12);
    CHECK(std::abs(r) < 0.1);
  }
}

TEST_CASE("corr_stats on the five-element fixture") {
  const CorrelationStats s = corr_stats({0.0, 0.1, 0.2, 0.3, 0.4});
  CHECK(s.mean == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(s.q25 == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(s.q50 == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(s.q75 == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(s.iqr == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(s.std == doctest::Approx(std::sqrt(0.1 / 4.0)).epsilon(1e-12));
  CHECK_THROWS_AS(corr_stats({0.5}), InvalidArgument);
  CHECK_THROWS_AS(corr_stats({}), InvalidArgument);

  const CorrelationStats i = corr_stats({0.3, 0.0, 0.4, 0.1, 0.2});
  CHECK(i.mean == doctest::Approx(s.mean).epsilon(1e-15));
  CHECK(i.q25 == s.q25);
  CHECK(i.q75 == s.q75);
  CHECK(i.std == doctest::Approx(s.std).epsilon(1e-14));
  const CorrelationStats interp = corr_stats({0.0, 1.0});
  CHECK(interp.q25 == doctest::Approx(0.25));
  CHECK(interp.q75 == doctest::Approx(0.75));
}

TEST_CASE("frechet: analytic one- and two-dimensional cases") {
  const double a = 1.0 / std::sqrt(2.0);
  CHECK(std::abs(frechet_distance({{-a}, {a}}, {{3 - a}, {3 + a}}) - 9.0) < 1e-9);

  // Diagonal covariances commute, so the distance is a sum over dimensions:
  // (mu1 - mu2)^2 + (s1 - s2)^2.
  auto cross = [](double cx, double cy, double sx, double sy) {
    return std::vector<std::vector<double>>{{cx + sx, cy}, {cx - sx, cy}, {cx, cy + sy}, {cx, cy - sy}};
  };
  const double s1x = std::sqrt(2.0 * 4.0 / 3.0), s1y = std::sqrt(2.0 * 1.0 / 3.0);
  const double s2x = std::sqrt(2.0 * 9.0 / 3.0), s2y = std::sqrt(2.0 * 0.25 / 3.0);
  const double expect = 1.0 + 4.0 + std::pow(s1x - s2x, 2) + std::pow(s1y - s2y, 2);
  CHECK(frechet_distance(cross(1, 0, 2, 1), cross(0, 2, 3, 0.5)) == doctest::Approx(expect).epsilon(1e-10));
  CHECK_THROWS_AS(frechet_distance({}, {{1.0}}), InvalidArgument);
  CHECK_THROWS_AS(frechet_distance({{1.0}, {2.0}}, {{1.0, 2.0}, {0.0, 1.0}}), InvalidArgument);
}

TEST_CASE("frechet: identity, symmetry, non-negativity and small-set regularisation") {
  Rng rng(7);
  auto draw = [&](int n, int d, double shift) {
    std::vector<std::vector<double>> s(n, std::vector<double>(d));
    for (auto& row : s)
      for (double& v : row) v = rng.normal(shift, 1.0);
    return s;
  };
  for (int trial = 0; trial < 10; ++trial) {
    const auto x = draw(100, 8, 0.0), y = draw(60, 8, 0.3 * trial);
    CHECK(frechet_distance(x, x) < 1e-6);
    CHECK(frechet_distance(x, y) >= 0.0);
    CHECK(std::abs(frechet_distance(x, y) - frechet_distance(y, x)) < 1e-9);
  }
  const auto few = draw(5, 16, 0.0);
  const double d = frechet_distance(few, draw(5, 16, 1.0));
  CHECK(std::isfinite(d));
  CHECK(d > 0.0);
  CHECK(frechet_distance(few, few) < 1e-6);
}

TEST_CASE("vae feature extractor yields 64 deterministic features") {
  latent::VaeConfig c;
  c.modality = latent::Modality::kTexture;
  c.channels = {8, 16, 16};
  const FeatureExtractor fx = vae_feature_extractor(latent::init_vae(c, 3));
  const auto pairs = synthetic_pairs(2);
  const auto f = fx.extract(pairs[0].texture);
  CHECK(f.size() == 64);
  CHECK(f == fx.extract(pairs[0].texture));
  CHECK(f != fx.extract(pairs[1].texture));
  latent::VaeConfig hc = c;
  hc.modality = latent::Modality::kHeightmap;
  CHECK_THROWS_AS(vae_feature_extractor(latent::init_vae(hc, 3)), InvalidArgument);
  CHECK_THROWS_AS(fx.extract(Texture(8, 8)), InvalidArgument);
}

TEST_CASE("pairing permutation test separates aligned from independent pairs") {
  const auto pairs = synthetic_pairs(24);
  Rng rng(5);
  const PairingTest aligned = pairing_permutation_test(pairs, 500, rng);
  double direct = 0;
  for (const auto& p : pairs) direct += pearson_corr_pair(p.height, p.texture);
  CHECK(aligned.aligned_mean == doctest::Approx(direct / 24).epsilon(1e-10));
  CHECK(aligned.aligned_mean > aligned.shuffled_mean);
  CHECK(aligned.p_value < 0.05);

  std::vector<TerrainPair> noise = pairs;
  Rng nr(9);
  for (auto& p : noise)
    for (uint8_t& v : p.texture.rgb) v = static_cast<uint8_t>(nr.below(256));
  const PairingTest indep = pairing_permutation_test(noise, 500, rng);
  CHECK(indep.p_value > 0.01);
  CHECK_THROWS_AS(pairing_permutation_test({pairs[0]}, 10, rng), InvalidArgument);
}

TEST_CASE("evaluate_model: self comparison, shuffled pairs and report output") {
  latent::VaeConfig c;
  c.modality = latent::Modality::kTexture;
  c.channels = {8, 16, 16};
  const FeatureExtractor fx = vae_feature_extractor(latent::init_vae(c, 3));
  const auto ref = synthetic_pairs(20);
  const EvaluationReport self = evaluate_model(ref, ref, fx);
  CHECK(self.abs_diff.mean == 0.0);
  CHECK(self.abs_diff.iqr == 0.0);
  CHECK(self.frechet < 1e-6);

  std::vector<TerrainPair> shuffled = ref;
  for (size_t i = 0; i < shuffled.size(); ++i) shuffled[i].texture = ref[(i + 7) % ref.size()].texture;
  const EvaluationReport sh = evaluate_model(shuffled, ref, fx);
  CHECK(sh.samples.mean < sh.reference.mean);
  CHECK(sh.frechet < 1e-6);  // same textures, different pairing

  const EvaluationReport rt = evaluation_report_from_json(nlohmann::json::parse(to_json(sh).dump()));
  CHECK(to_json(rt) == to_json(sh));

  const auto dir = temp_dir("report");
  write_report(sh, dir);
  const auto js = nlohmann::json::parse(std::ifstream(dir / "report.json"));
  CHECK(js.at("samples").at("mean").get<double>() == sh.samples.mean);
  std::ifstream csv(dir / "correlations.csv");
  std::string line;
  int rows = 0;
  std::getline(csv, line);
  CHECK(line == "set,index,correlation");
  while (std::getline(csv, line)) ++rows;
  CHECK(rows == 40);
}
