// Acceptance run: one line per criterion, exit status 0 only if all pass.
// Pass criterion names as arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "httplib.h"
#include "support/gradcheck.hpp"
#include "support/hydro_oracles.hpp"
#include "support/toy_models.hpp"
#include "terra/autodiff/batch.hpp"
#include "terra/control/adapter.hpp"
#include "terra/core/base64.hpp"
#include "terra/core/parallel.hpp"
#include "terra/diffusion/sampler.hpp"
#include "terra/metrics/metrics.hpp"
#include "terra/pipeline/commands.hpp"
#include "terra/raster/normalize.hpp"
#include "terra/service/service.hpp"

using namespace terra;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  if constexpr (sizeof...(args) == 0) {
    return f;
  } else {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
  }
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

const fs::path kWork = fs::temp_directory_path() / "terra_acceptance";

void note(const std::string& s) { std::fprintf(stderr, "  %s\n", s.c_str()); }

// ---------------------------------------------------------------------------

Outcome autodiff_gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(2024);
  double worst = 0;
  int64_t cases = 0;
  for (ad::OpKind kind : ad::all_op_kinds())
    for (int trial = 0; trial < 20; ++trial) {
      const test::GradCase c = test::random_case(kind, rng);
      worst = std::max(worst, test::check_gradients(c, rng).max_rel_error);
      ++cases;
    }
  const double secs = seconds_since(t0);
  return {worst < 1e-4 && secs < 60.0,
          fmt("%zu op kinds x 20 random cases (%lld total), max rel error %.2e, %.1fs", ad::all_op_kinds().size(),
              static_cast<long long>(cases), worst, secs)};
}

Outcome forward_diffusion_statistics() {
  const int64_t n = 100000;
  bool ok = true;
  std::string detail;
  for (double ab : {0.9, 0.5, 0.1}) {
    const double z0 = 0.7;
    Rng rng(substream_seed(31, "acceptance", static_cast<uint64_t>(ab * 10)));
    const diffusion::FTensor zt =
        diffusion::forward_diffuse(diffusion::FTensor({n}, static_cast<float>(z0)), ab, ad::randn({n}, rng));
    double s = 0, ss = 0;
    for (float v : zt.data()) s += v;
    const double mean = s / n;
    for (float v : zt.data()) ss += (v - mean) * (v - mean);
    const double var = ss / (n - 1), target = 1.0 - ab;
    const double mean_se = std::sqrt(target / n), var_se = target * std::sqrt(2.0 / (n - 1));
    const double zm = std::abs(mean - std::sqrt(ab) * z0) / mean_se, zv = std::abs(var - target) / var_se;
    ok = ok && zm < 3 && zv < 3;
    detail += fmt("%sabar %.1f: mean %.2f SE, var %.2f SE", detail.empty() ? "" : "; ", ab, zm, zv);
  }
  return {ok, detail};
}

Outcome hydrology_oracles() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(101);
  int fill_ok = 0, d8_ok = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto g = test::random_grid(16, 16, rng, trial % 2 ? 5 : 1000);
    fill_ok += geomorph::fill_depressions(g) == test::fixpoint_fill(g, geomorph::kFillEpsilon);
  }
  for (int trial = 0; trial < 1000; ++trial) {
    const auto f = geomorph::fill_depressions(test::random_grid(12, 12, rng, trial % 2 ? 4 : 500));
    const auto r = geomorph::flow_accumulation_d8(f);
    bool same = r.accumulation == test::path_walk_accumulation(r.direction);
    for (int y = 0; y < 12 && same; ++y)
      for (int x = 0; x < 12; ++x) same = same && r.direction.at(x, y) == test::reference_direction(f, x, y);
    d8_ok += same;
  }
  const double secs = seconds_since(t0);
  return {fill_ok == 1000 && d8_ok == 1000 && secs < 60,
          fmt("Priority-Flood %d/1000 16x16 grids, D8 %d/1000 12x12 grids, %.1fs", fill_ok, d8_ok, secs)};
}

Outcome sketch_determinism() {
  const fs::path dir = kWork / "sketch_det";
  fs::remove_all(dir);
  synth::SynthConfig sc;
  sc.seed = 8;
  sc.size_px = 64;
  synth::build_synthetic_dataset(dir, 12, sc, {{}, 1});
  auto snapshot = [&] {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir / "sketches")) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::vector<std::vector<uint8_t>> out;
    for (const auto& f : files) out.push_back(raster::read_file(f));
    return out;
  };
  const auto first = snapshot();
  bool same = first.size() == 12;
  for (int threads : {1, 2, 4, 8}) {
    synth::extract_dataset_sketches(dir, {}, threads);
    same = same && snapshot() == first;
  }
  const auto entries = synth::load_dataset(dir);
  for (const auto& e : entries)
    for (int rep = 0; rep < 2; ++rep)
      same = same && raster::encode_texture_png(geomorph::extract_sketch(e.pair.height).sketch) ==
                         raster::encode_texture_png(*e.sketch);
  return {same, fmt("12 heightmaps, sketch PNG bytes identical at 1/2/4/8 threads and across repeated runs")};
}

Outcome normalization_round_trip() {
  Rng rng(77);
  const int n = 1000000;
  std::vector<float> h(n);
  for (float& v : h) v = static_cast<float>(rng.uniform(0.0, 2000.0));
  const raster::Heightmap hm(1000, 1000, h);
  const std::vector<float> norm = raster::normalize_height(hm);
  const raster::Heightmap back = raster::denormalize_height(norm, 1000, 1000);
  double worst = 0;
  for (int i = 0; i < n; ++i) worst = std::max(worst, std::abs(static_cast<double>(back.elevations[i]) - h[i]));
  return {worst <= 1e-3, fmt("max |denormalize(normalize(h)) - h| = %.3e m over 1e6 elevations", worst)};
}

// A default-width denoiser with non-zero residual branches.
diffusion::JointModel nontrivial_base(uint64_t seed) {
  diffusion::JointModel m;
  m.denoiser = diffusion::init_denoiser({}, seed);
  Rng rng(seed + 1);
  for (auto& [name, p] : m.denoiser.params)
    if (name.find("conv2.weight") != std::string::npos || name == "context.vector")
      for (float& v : p.value.data()) v = static_cast<float>(rng.normal(0.0, 0.05));
  m.latent_size = 16;
  return m;
}

Outcome controlnet_zero_init() {
  const diffusion::JointModel base = nontrivial_base(3);
  const control::ControlModel m = control::init_adapter(base, {}, 5);
  Rng rng(2);
  const diffusion::FTensor z = ad::randn({2, 8, 16, 16}, rng);
  const std::vector<int> t{17, 640};
  const diffusion::FTensor ref = diffusion::predict_eps(base.denoiser, z, t);
  double worst = 0;
  for (int k = 0; k < 10; ++k) {
    diffusion::FTensor c({2, 3, 64, 64});
    for (float& v : c.data()) v = static_cast<float>(rng.uniform(0.0, 1.0));
    const diffusion::FTensor out = control::predict_eps(m, z, t, c);
    for (int64_t i = 0; i < out.numel(); ++i) worst = std::max(worst, static_cast<double>(std::abs(out[i] - ref[i])));
  }
  return {worst < 1e-6, fmt("10 random 64x64 conditions, max abs diff %.3e", worst)};
}

Outcome channel_extension() {
  diffusion::DenoiserConfig c4;
  c4.in_channels = c4.out_channels = 4;
  diffusion::JointModel src;
  src.denoiser = diffusion::init_denoiser(c4, 21);
  Rng pr(22);
  for (auto& [name, p] : src.denoiser.params)
    if (name.find("conv2.weight") != std::string::npos)
      for (float& v : p.value.data()) v = static_cast<float>(pr.normal(0.0, 0.05));
  Rng rng(4);
  const diffusion::FTensor z = ad::randn({3, 4, 16, 16}, rng), zeros({3, 4, 16, 16});
  const std::vector<int> t{1, 500, 1000};
  const diffusion::FTensor ref = diffusion::predict_eps(src.denoiser, z, t);
  Rng er(1);
  const auto app = diffusion::extend_channels(src.denoiser, 4, 4, 8, 8, 0.0, er);
  const auto pre = diffusion::extend_channels(src.denoiser, 4, 4, 8, 8, 0.0, er, true);
  const bool a = diffusion::split_latents(diffusion::predict_eps(app, diffusion::fuse_latents(z, zeros), t), 4).first == ref;
  const bool b = diffusion::split_latents(diffusion::predict_eps(pre, diffusion::fuse_latents(zeros, z), t), 4).second == ref;
  return {a && b, fmt("4 -> 8 channels, appended %s, prepended %s (bitwise)", a ? "equal" : "DIFFERENT",
                      b ? "equal" : "DIFFERENT")};
}

Outcome heightmap_normalization_claim() {
  const auto t0 = std::chrono::steady_clock::now();
  synth::SynthConfig sc;
  sc.seed = 1;
  sc.size_px = 64;
  std::vector<raster::Heightmap> hms;
  for (int i = 0; i < 320; ++i) hms.push_back(synth::generate_pair(sc, static_cast<uint64_t>(i)).height);
  double mse_m[2];
  int k = 0;
  for (double h_max : {2000.0, 8000.0}) {
    std::vector<latent::FTensor> train, test;
    for (int i = 0; i < 320; ++i) (i < 256 ? train : test).push_back(latent::heightmap_tensor(hms[i], h_max));
    latent::VaeConfig cfg;
    cfg.h_max = h_max;
    latent::VaeTrainConfig tc;
    tc.seed = 3;
    tc.epochs = 20;
    const latent::VaeModel m = latent::vae_from_checkpoint(latent::train_vae(train, cfg, tc));
    // Normalised MSE times (H_max / 2)^2 is the MSE in square meters.
    mse_m[k++] = latent::reconstruction_mse(m, test) * h_max * h_max / 4.0;
  }
  const double secs = seconds_since(t0), reduction = 1.0 - mse_m[0] / mse_m[1];
  return {reduction >= 0.25 && secs < 1800,
          fmt("test MSE %.0f m^2 (H_max 2000) vs %.0f m^2 (H_max 8000): %.0f%% lower, %.0fs", mse_m[0], mse_m[1],
              100 * reduction, secs)};
}

// ---------------------------------------------------------------------------
// The desk-scale pipeline shared by the joint, Frechet and sketch criteria.

pipeline::PipelineConfig desk_config() {
  const json j{{"seed", 1},
               {"paths", {{"dataset", (kWork / "desk" / "data").string()}, {"models", (kWork / "desk" / "models").string()}}},
               {"dataset", {{"count", 512}, {"synth", {{"size_px", 64}, {"correlation_strength", 0.9}}}}},
               {"vae", {{"train", {{"epochs", 20}, {"lr", 1e-3}}}}},
               {"ldm", {{"train", {{"epochs", 60}, {"lr", 1e-3}}}}},
               {"control", {{"train", {{"epochs", 10}, {"lr", 1e-4}, {"condition_dropout", 0.1}}}}},
               {"sample", {{"steps", 20}}}};
  return pipeline::pipeline_config_from_json(j);
}

struct Desk {
  pipeline::PipelineConfig cfg = desk_config();
  std::vector<raster::TerrainPair> train;
  double train_seconds = 0;
  bool built = false;
};

Desk& desk() {
  static Desk d;
  if (!d.built) {
    const auto t0 = std::chrono::steady_clock::now();
    fs::remove_all(kWork / "desk");
    pipeline::dataset_build(d.cfg, note);
    pipeline::train_vaes(d.cfg, note);
    pipeline::train_joint(d.cfg, note);
    for (auto& e : synth::load_dataset(d.cfg.paths.dataset)) d.train.push_back(std::move(e.pair));
    d.train_seconds = seconds_since(t0);
    d.built = true;
  }
  return d;
}

Outcome joint_correlation() {
  Desk& d = desk();
  const auto t0 = std::chrono::steady_clock::now();
  const pipeline::Generator g = pipeline::load_generator(d.cfg.paths.models);
  const auto gen = pipeline::generate(g, 128, 2024, d.cfg.sample);
  Rng rng(99);
  const metrics::PairingTest pt = metrics::pairing_permutation_test(gen, 999, rng);
  std::vector<double> tr;
  for (const auto& p : d.train) tr.push_back(metrics::pearson_corr_pair(p.height, p.texture));
  const double train_mean = metrics::corr_stats(tr).mean;
  const bool closer = std::abs(pt.aligned_mean - train_mean) < std::abs(pt.shuffled_mean - train_mean);
  const double secs = d.train_seconds + seconds_since(t0);
  return {pt.aligned_mean > pt.shuffled_mean && pt.p_value < 0.05 && closer && secs < 7200,
          fmt("generated %.3f vs shuffled %.3f (p = %.3f, 999 permutations); train mean %.3f, gaps %.3f vs %.3f; "
              "%.0fs total",
              pt.aligned_mean, pt.shuffled_mean, pt.p_value, train_mean, std::abs(pt.aligned_mean - train_mean),
              std::abs(pt.shuffled_mean - train_mean), secs)};
}

Outcome frechet_sanity() {
  Desk& d = desk();
  const pipeline::Generator trained = pipeline::load_generator(d.cfg.paths.models);
  const metrics::FeatureExtractor fx = metrics::vae_feature_extractor(trained.texture_vae);

  pipeline::Generator untrained = trained;
  untrained.control.reset();
  untrained.ldm.denoiser = diffusion::init_denoiser(trained.ldm.denoiser.config, 12345);
  const auto noise = pipeline::generate(untrained, 128, 7, d.cfg.sample);

  std::vector<raster::Texture> all, half_a, half_b, untrained_tex;
  for (size_t i = 0; i < d.train.size(); ++i) {
    all.push_back(d.train[i].texture);
    (i % 2 ? half_b : half_a).push_back(d.train[i].texture);
  }
  for (const auto& p : noise) untrained_tex.push_back(p.texture);
  const double halves = metrics::frechet_feature_distance(half_a, half_b, fx);
  const double vs_untrained = metrics::frechet_feature_distance(all, untrained_tex, fx);
  const double self = metrics::frechet_feature_distance(all, all, fx);
  return {halves < vs_untrained && std::abs(self) < 1e-6,
          fmt("halves %.4f < train vs untrained %.4f; self %.2e (%s)", halves, vs_untrained, self, fx.name.c_str())};
}

// Mean elevation under the red and green strokes.
struct LineGap {
  double red = 0, green = 0;
};

LineGap line_elevations(const raster::Heightmap& hm, const raster::Texture& sketch) {
  double r = 0, g = 0;
  int nr = 0, ng = 0;
  for (int y = 0; y < hm.height; ++y)
    for (int x = 0; x < hm.width; ++x) {
      if (sketch.at(x, y, 0)) r += hm.at(x, y), ++nr;
      if (sketch.at(x, y, 1)) g += hm.at(x, y), ++ng;
    }
  return {r / std::max(nr, 1), g / std::max(ng, 1)};
}

// One-sided binomial tail P(X >= k) for X ~ Bin(n, 1/2).
double sign_test_p(int k, int n) {
  double p = 0;
  for (int i = k; i <= n; ++i) p += std::exp(std::lgamma(n + 1.0) - std::lgamma(i + 1.0) - std::lgamma(n - i + 1.0) - n * std::log(2.0));
  return p;
}

Outcome sketch_directionality() {
  Desk& d = desk();
  const auto t0 = std::chrono::steady_clock::now();
  pipeline::train_adapter(d.cfg, note);
  const pipeline::Generator g = pipeline::load_generator(d.cfg.paths.models);
  // Held-out terrain: index far outside the 512 training pairs.
  const raster::Texture sketch = geomorph::extract_sketch(synth::generate_pair(d.cfg.dataset.synth, 100000).height).sketch;
  const auto samples = pipeline::generate(g, 32, 4242, d.cfg.sample, sketch);
  int lower = 0;
  double gap = 0;
  for (const auto& s : samples) {
    const LineGap lg = line_elevations(s.height, sketch);
    lower += lg.red < lg.green;
    gap += lg.green - lg.red;
  }
  const double p = sign_test_p(lower, 32);
  return {p < 0.05, fmt("red below green in %d/32 samples (sign test p = %.4f), mean gap %.1f m; adapter %.0fs", lower,
                        p, gap / 32, seconds_since(t0))};
}

// ---------------------------------------------------------------------------

Outcome metrics_oracles() {
  Rng rng(1);
  double worst = 0;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> x(100 + trial), y(x.size());
    for (size_t i = 0; i < x.size(); ++i) {
      x[i] = rng.normal(500.0, 200.0);
      y[i] = 0.3 * x[i] + rng.normal(0.0, 80.0);
    }
    // Direct two-pass formula.
    double mx = 0, my = 0;
    for (size_t i = 0; i < x.size(); ++i) mx += x[i], my += y[i];
    mx /= x.size();
    my /= y.size();
    long double sxy = 0, sxx = 0, syy = 0;
    for (size_t i = 0; i < x.size(); ++i) {
      sxy += (x[i] - mx) * (y[i] - my);
      sxx += (x[i] - mx) * (x[i] - mx);
      syy += (y[i] - my) * (y[i] - my);
    }
    const double r = static_cast<double>(sxy / std::sqrt(sxx * syy));
    worst = std::max(worst, std::abs(metrics::pearson(x, y) - r));
  }
  const metrics::CorrelationStats s = metrics::corr_stats({0.0, 0.1, 0.2, 0.3, 0.4});
  const double stats_err = std::max({std::abs(s.mean - 0.2), std::abs(s.q25 - 0.1), std::abs(s.q50 - 0.2),
                                     std::abs(s.q75 - 0.3), std::abs(s.iqr - 0.2), std::abs(s.std - std::sqrt(0.025))});
  const double a = 1.0 / std::sqrt(2.0);
  const double fd = metrics::frechet_distance({{-a}, {a}}, {{3 - a}, {3 + a}});
  return {worst < 1e-12 && stats_err < 1e-12 && std::abs(fd - 9.0) < 1e-9,
          fmt("pearson max error %.1e; corr_stats fixture max error %.1e; 1-D Frechet %.12f", worst, stats_err, fd)};
}

Outcome service_contract() {
  const fs::path dir = kWork / "service_models";
  fs::remove_all(dir);
  test::write_toy_models(dir, true);
  auto gen = std::make_shared<const pipeline::Generator>(pipeline::load_generator(dir));
  std::vector<std::string> failures;
  auto expect = [&](bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  };

  service::GenerationService svc({}, service::make_backend(gen));
  svc.start();
  httplib::Server server;
  service::register_routes(server, svc);
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread th([&] { server.listen_after_bind(); });
  server.wait_until_ready();
  httplib::Client cli("127.0.0.1", port);

  auto health = cli.Get("/api/health");
  expect(health && health->status == 200, "health 200");
  if (health) {
    const json h = json::parse(health->body);
    expect(h["model_loaded"] == true, "model_loaded true");
    expect(h["checkpoints"][pipeline::kLdmFile] == ckpt::file_hash(dir / pipeline::kLdmFile), "hash matches file");
  }
  raster::Texture sk(16, 16);
  for (int x = 0; x < 16; ++x) sk.at(x, 5, 0) = 255;
  const std::string b64 = base64_encode(raster::encode_texture_png(sk));
  auto poll = [&](const std::string& id) {
    json st;
    for (int i = 0; i < 1000; ++i) {
      auto r = cli.Get("/api/generate/" + id);
      if (!r) break;
      st = json::parse(r->body);
      if (st["state"] == "done" || st["state"] == "failed") break;
      std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
    return st;
  };
  const std::string req = json{{"sketch_png_base64", b64}, {"steps", 4}, {"seed", 5}}.dump();
  auto p1 = cli.Post("/api/generate", req, "application/json");
  auto p2 = cli.Post("/api/generate", req, "application/json");
  expect(p1 && p1->status == 202 && p2 && p2->status == 202, "valid sketch 202");
  if (p1 && p2 && p1->status == 202 && p2->status == 202) {
    const json a = poll(json::parse(p1->body)["job_id"]), b = poll(json::parse(p2->body)["job_id"]);
    expect(a["state"] == "done", "job completes");
    expect(a["result"] == b["result"], "same sketch, seed, steps give identical bytes");
    if (a["state"] == "done") {
      const auto hm = raster::decode_heightmap_png(base64_decode(a["result"]["heightmap_png_base64"].get<std::string>()));
      const auto tx = raster::decode_texture_png(base64_decode(a["result"]["texture_png_base64"].get<std::string>()));
      expect(hm.width == tx.width && hm.height == tx.height && hm.width == 16, "result dimensions match");
    }
  }
  raster::Texture small(8, 8);
  auto wrong = cli.Post("/api/generate", json{{"sketch_png_base64", base64_encode(raster::encode_texture_png(small))}}.dump(),
                        "application/json");
  expect(wrong && wrong->status == 400, "wrong-size sketch 400");
  auto junk = cli.Post("/api/generate", json{{"sketch_png_base64", "AAAA"}}.dump(), "application/json");
  expect(junk && junk->status == 400, "undecodable sketch 400");
  auto none = cli.Post("/api/generate", "", "application/json");
  expect(none && none->status == 202, "no body accepted as unconditional");
  auto missing = cli.Get("/api/generate/11111111-2222-4333-8444-555555555555");
  expect(missing && missing->status == 404, "unknown id 404");
  server.stop();
  th.join();
  svc.stop();

  // Full queue, and no model at all.
  service::GenerationService queued({}, service::make_backend(gen));
  int accepted = 0;
  for (int i = 0; i < 17; ++i) accepted += queued.post_generate("").status == 202;
  expect(accepted == 16 && queued.post_generate("").status == 503, "queue depth 16 then 503");
  service::GenerationService empty({}, std::nullopt);
  expect(empty.health().body["model_loaded"] == false && empty.post_generate("").status == 503, "no model: 503");

  std::string detail = failures.empty() ? "health, generate, poll, 400/404/503 paths and determinism over HTTP" : "failed:";
  for (const auto& f : failures) detail += " [" + f + "]";
  return {failures.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"autodiff-gradients", autodiff_gradients},
      {"forward-diffusion-statistics", forward_diffusion_statistics},
      {"priority-flood-d8-oracles", hydrology_oracles},
      {"sketch-determinism", sketch_determinism},
      {"normalization-round-trip", normalization_round_trip},
      {"controlnet-zero-init", controlnet_zero_init},
      {"channel-extension", channel_extension},
      {"heightmap-vae-normalization", heightmap_normalization_claim},
      {"joint-correlation", joint_correlation},
      {"frechet-sanity", frechet_sanity},
      {"sketch-directionality", sketch_directionality},
      {"metrics-oracles", metrics_oracles},
      {"service-contract", service_contract},
  };
  std::set<std::string> only(argv + 1, argv + argc);
  fs::create_directories(kWork);
  int failed = 0, ran = 0;
  for (const auto& [name, fn] : criteria) {
    if (!only.empty() && !only.count(name)) continue;
    ++ran;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("[%s] %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%d criteria passed\n", ran - failed, ran);
  return failed == 0 && ran > 0 ? 0 : 1;
}
