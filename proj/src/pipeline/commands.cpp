#include "terra/pipeline/commands.hpp"

#include <algorithm>

#include "terra/ckpt/checkpoint.hpp"
#include "terra/core/parallel.hpp"
#include "terra/core/rng.hpp"
#include "terra/core/version.hpp"
#include "terra/raster/hgt.hpp"
#include "terra/raster/patches.hpp"
#include "terra/raster/quantize.hpp"
#include "terra/raster/resample.hpp"

namespace terra::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void say(const Logger& log, const std::string& msg) {
  if (log) log(msg);
}

void require_file(const fs::path& p, const std::string& hint) {
  if (!fs::is_regular_file(p)) throw InvalidArgument("missing " + p.string() + "; " + hint);
}

void require_dataset(const fs::path& dir) {
  require_file(dir / "manifest.json", "run dataset-build first or point paths.dataset at a dataset");
}

std::map<std::string, std::string> hash_tree(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const std::string rel = fs::relative(e.path(), dir).generic_string();
    if (rel == "run_manifest.json") continue;
    out[rel] = ckpt::file_hash(e.path());
  }
  return out;
}

std::string pad_id(const std::string& prefix, size_t i) {
  std::string n = std::to_string(i);
  return prefix + std::string(n.size() < 5 ? 5 - n.size() : 0, '0') + n;
}

struct PairRecord {
  std::string id;
  raster::TerrainPair pair;
  raster::Sidecar sidecar;
};

/// Same layout as the synthetic builder so load_dataset reads both.
void write_pair_dataset(const fs::path& dir, const std::vector<PairRecord>& recs, const json& config,
                        const std::optional<geomorph::SketchConfig>& sketch, int threads) {
  for (const char* sub : {"heightmaps", "textures", "sidecars"}) fs::create_directories(dir / sub);
  if (sketch) fs::create_directories(dir / "sketches");
  parallel_for(recs.size(), threads, [&](size_t i) {
    const auto& r = recs[i];
    raster::write_file_atomic(dir / "heightmaps" / (r.id + ".png"), raster::encode_heightmap_png(r.pair.height));
    raster::write_file_atomic(dir / "textures" / (r.id + ".png"), raster::encode_texture_png(r.pair.texture));
    raster::write_file_atomic(dir / "sidecars" / (r.id + ".json"), raster::sidecar_to_json(r.sidecar));
    if (sketch)
      raster::write_file_atomic(dir / "sketches" / (r.id + ".png"),
                                raster::encode_texture_png(geomorph::extract_sketch(r.pair.height, *sketch).sketch));
  });
  json pairs = json::array();
  for (const auto& r : recs) {
    json p{{"id", r.id},
           {"heightmap", "heightmaps/" + r.id + ".png"},
           {"texture", "textures/" + r.id + ".png"},
           {"sidecar", "sidecars/" + r.id + ".json"}};
    if (sketch) p["sketch"] = "sketches/" + r.id + ".png";
    pairs.push_back(std::move(p));
  }
  const json manifest{{"format", "terrafusion-dataset"}, {"version", 1}, {"count", recs.size()},
                      {"config", config}, {"pairs", pairs}};
  raster::write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

std::vector<PairRecord> dem_pairs(const PipelineConfig& c, const Logger& log) {
  const DemConfig& d = c.dataset.dem;
  if (d.tiles.empty()) throw InvalidArgument("dataset.dem.tiles is empty");
  raster::RegionSelector selector(d.region_filter);
  std::vector<PairRecord> out;
  for (const auto& tile : d.tiles) {
    require_file(tile.hgt, "check dataset.dem.tiles");
    require_file(tile.texture, "check dataset.dem.tiles");
    if (tile.region) {
      const raster::FilterDecision dec = selector.offer(*tile.region);
      if (!dec.accepted) {
        say(log, "tile " + tile.id + " rejected: " + std::string(raster::to_string(dec.reason)));
        continue;
      }
    }
    raster::HgtTile hgt = raster::parse_hgt(raster::read_file(tile.hgt), d.source_resolution_m);
    raster::Texture tex = raster::decode_texture_png(raster::read_file(tile.texture));
    if (tex.width != hgt.heights.width || tex.height != hgt.heights.height)
      throw InvalidArgument("tile " + tile.id + ": texture size differs from the elevation grid");
    std::vector<uint8_t> mask = hgt.void_mask;
    raster::Heightmap hm = hgt.heights;
    if (d.resolution_m != d.source_resolution_m) {
      hm = raster::resample_bilinear(hgt.heights, d.resolution_m);
      tex = raster::resize_bilinear(tex, hm.width, hm.height);
      std::vector<float> mf(mask.begin(), mask.end());
      const raster::Heightmap m = raster::resize_bilinear(
          raster::Heightmap(hgt.heights.width, hgt.heights.height, std::move(mf), d.source_resolution_m), hm.width,
          hm.height);
      mask.assign(m.size(), 0);
      for (size_t i = 0; i < m.size(); ++i) mask[i] = m.elevations[i] > 0 ? 1 : 0;
    }
    // Patch k is grid cell k in row-major order; void cells are skipped here
    // rather than by extract_patches so that ids stay tied to grid position.
    const auto patches = raster::extract_patches(hm, tex, d.patch_px);
    const int cols = hm.width / d.patch_px;
    auto has_void = [&](size_t k) {
      if (mask.empty()) return false;
      const int x0 = static_cast<int>(k) % cols * d.patch_px, y0 = static_cast<int>(k) / cols * d.patch_px;
      for (int y = y0; y < y0 + d.patch_px; ++y)
        for (int x = x0; x < x0 + d.patch_px; ++x)
          if (mask[static_cast<size_t>(y) * hm.width + x]) return true;
      return false;
    };
    int kept = 0;
    for (size_t k = 0; k < patches.size() && static_cast<int>(out.size()) < c.dataset.count; ++k) {
      if (has_void(k) || !raster::passes_elevation_filter(patches[k].height, d.elevation_limit_m)) continue;
      raster::TerrainPair p = d.out_px == d.patch_px ? patches[k] : raster::upsample_patch(patches[k], d.out_px);
      for (float& v : p.height.elevations) v = std::round(v);
      const std::string id = tile.id + "_" + pad_id("", k);
      raster::Sidecar side{p.height.resolution_m, "dem:" + tile.id + ":" + std::to_string(k), p.height.max_elevation()};
      out.push_back({id, std::move(p), side});
      ++kept;
    }
    say(log, "tile " + tile.id + ": " + std::to_string(kept) + " of " + std::to_string(patches.size()) + " patches kept");
    if (static_cast<int>(out.size()) >= c.dataset.count) break;
  }
  if (out.empty()) throw InvalidArgument("no DEM patch passed the filters");
  return out;
}

std::vector<latent::FTensor> images_of(const std::vector<synth::DatasetEntry>& entries, const latent::VaeConfig& cfg) {
  std::vector<latent::FTensor> out;
  out.reserve(entries.size());
  for (const auto& e : entries)
    out.push_back(cfg.modality == latent::Modality::kHeightmap ? latent::heightmap_tensor(e.pair.height, cfg.h_max)
                                                              : latent::texture_tensor(e.pair.texture));
  return out;
}

std::vector<raster::TerrainPair> pairs_of(std::vector<synth::DatasetEntry> entries) {
  std::vector<raster::TerrainPair> out;
  out.reserve(entries.size());
  for (auto& e : entries) out.push_back(std::move(e.pair));
  return out;
}

latent::VaeModel load_vae(const fs::path& models, const char* file) {
  require_file(models / file, "run train-vae first");
  return latent::vae_from_checkpoint(ckpt::load(models / file));
}

void check_latent_grid(const std::vector<synth::DatasetEntry>& entries, const latent::VaeConfig& cfg) {
  const int w = entries.at(0).pair.height.width, h = entries.at(0).pair.height.height;
  for (const auto& e : entries)
    if (e.pair.height.width != w || e.pair.height.height != h)
      throw InvalidArgument("dataset pairs must share one size; " + e.id + " differs");
  if (w != h || w % (2 * cfg.downsample) != 0)
    throw InvalidArgument("dataset images must be square with a side divisible by " + std::to_string(2 * cfg.downsample));
}

}  // namespace

void write_run_manifest(const fs::path& dir, const std::string& command, const PipelineConfig& c,
                        const std::map<std::string, std::string>& outputs) {
  const json j{{"command", command},
               {"versions", {{"terrafusion", kVersion}, {"checkpoint_format", ckpt::kFormatVersion}}},
               {"seed", c.seed},
               {"config_hash", config_hash(c)},
               {"config", to_json(c)},
               {"outputs", outputs}};
  raster::write_file_atomic(dir / "run_manifest.json", j.dump(2) + "\n");
}

void dataset_build(const PipelineConfig& c, const Logger& log) {
  const fs::path& dir = c.paths.dataset;
  if (c.dataset.source == "synthetic") {
    say(log, "building " + std::to_string(c.dataset.count) + " synthetic pairs in " + dir.string());
    synth::build_synthetic_dataset(dir, c.dataset.count, c.dataset.synth, {c.dataset.sketch, c.worker_threads()});
  } else {
    const auto recs = dem_pairs(c, log);
    say(log, "writing " + std::to_string(recs.size()) + " DEM pairs to " + dir.string());
    write_pair_dataset(dir, recs, to_json(c).at("dataset"), c.dataset.sketch, c.worker_threads());
  }
  write_run_manifest(dir, "dataset-build", c, hash_tree(dir));
}

void sketch_extract(const PipelineConfig& c, const Logger& log) {
  require_dataset(c.paths.dataset);
  if (c.paths.sketches.empty()) {
    synth::extract_dataset_sketches(c.paths.dataset, c.dataset.sketch, c.worker_threads());
    say(log, "sketches written to " + (c.paths.dataset / "sketches").string());
    write_run_manifest(c.paths.dataset, "sketch-extract", c, hash_tree(c.paths.dataset));
    return;
  }
  const auto entries = synth::load_dataset(c.paths.dataset);
  fs::create_directories(c.paths.sketches);
  parallel_for(entries.size(), c.worker_threads(), [&](size_t i) {
    raster::write_file_atomic(c.paths.sketches / (entries[i].id + ".png"),
                              raster::encode_texture_png(geomorph::extract_sketch(entries[i].pair.height, c.dataset.sketch).sketch));
  });
  say(log, std::to_string(entries.size()) + " sketches written to " + c.paths.sketches.string());
  write_run_manifest(c.paths.sketches, "sketch-extract", c, hash_tree(c.paths.sketches));
}

void train_vaes(const PipelineConfig& c, const Logger& log) {
  require_dataset(c.paths.dataset);
  const auto entries = synth::load_dataset(c.paths.dataset);
  if (entries.empty()) throw InvalidArgument("dataset is empty");
  check_latent_grid(entries, c.height_vae);
  fs::create_directories(c.paths.models);
  std::map<std::string, std::string> outputs;
  for (const auto& [cfg, file, stage] : {std::tuple{c.height_vae, kHeightVaeFile, "vae_heightmap"},
                                         std::tuple{c.texture_vae, kTextureVaeFile, "vae_texture"}}) {
    latent::VaeTrainConfig tc = c.vae_train;
    tc.seed = stage_seed(c, stage);
    tc.checkpoint_dir = c.paths.models / "checkpoints";
    const std::string name = latent::to_string(cfg.modality);
    const ckpt::Checkpoint ck = latent::train_vae(images_of(entries, cfg), cfg, tc, std::nullopt, [&](const latent::EpochReport& r) {
      say(log, name + " VAE epoch " + std::to_string(r.epoch + 1) + ": loss " + std::to_string(r.loss));
    });
    ckpt::save(c.paths.models / file, ck);
    outputs[file] = ckpt::file_hash(c.paths.models / file);
  }
  write_run_manifest(c.paths.models, "train-vae", c, outputs);
}

void train_joint(const PipelineConfig& c, const Logger& log) {
  require_dataset(c.paths.dataset);
  const latent::VaeModel hv = load_vae(c.paths.models, kHeightVaeFile);
  const latent::VaeModel xv = load_vae(c.paths.models, kTextureVaeFile);
  if (hv.config.latent_channels != xv.config.latent_channels || hv.config.downsample != xv.config.downsample)
    throw InvalidArgument("the two VAE checkpoints disagree on latent layout; retrain them together");
  const auto entries = synth::load_dataset(c.paths.dataset);
  if (entries.empty()) throw InvalidArgument("dataset is empty");
  check_latent_grid(entries, hv.config);
  say(log, "encoding " + std::to_string(entries.size()) + " pairs");
  const LatentSet lat = encode_pairs(hv, xv, pairs_of(entries));

  const int64_t ch = hv.config.latent_channels;
  diffusion::DenoiserConfig dc = c.denoiser;
  dc.in_channels = dc.out_channels = 2 * ch;
  diffusion::JointModel base{diffusion::init_denoiser(dc, substream_seed(stage_seed(c, "ldm"), "init")), c.schedule,
                             diffusion::compute_latent_stats(lat.zh, lat.zx), ch, 0};

  diffusion::LdmTrainConfig tc = c.ldm_train;
  tc.seed = stage_seed(c, "ldm");
  tc.checkpoint_dir = c.paths.models / "checkpoints";
  if (c.texture_pretrain_epochs > 0) {
    diffusion::DenoiserConfig pc = dc;
    pc.in_channels = pc.out_channels = ch;
    std::vector<diffusion::FTensor> zx;
    for (const auto& z : lat.zx) zx.push_back(diffusion::standardise(z, base.stats.x_mean, base.stats.x_std));
    diffusion::LdmTrainConfig ptc = tc;
    ptc.seed = stage_seed(c, "texture_prior");
    ptc.epochs = c.texture_pretrain_epochs;
    say(log, "training the texture prior for " + std::to_string(ptc.epochs) + " epochs");
    const diffusion::DenoiserModel prior = diffusion::train_texture_prior(
        zx, diffusion::init_denoiser(pc, substream_seed(ptc.seed, "init")), c.schedule, ptc);
    Rng rng = Rng::substream(ptc.seed, "extend");
    base.denoiser = diffusion::extend_channels(prior, ch, ch, 2 * ch, 2 * ch, c.extension_init_scale, rng, true);
  }

  const ckpt::Checkpoint ck = diffusion::train_ldm(lat.zh, lat.zx, base, tc, std::nullopt, [&](int epoch, double loss) {
    say(log, "LDM epoch " + std::to_string(epoch + 1) + ": loss " + std::to_string(loss));
  });
  fs::create_directories(c.paths.models);
  ckpt::save(c.paths.models / kLdmFile, ck);
  if (fs::exists(c.paths.models / kControlFile)) {
    fs::rename(c.paths.models / kControlFile, c.paths.models / (std::string(kControlFile) + ".stale"));
    say(log, "the existing adapter was trained on the old LDM; renamed it to control.tfck.stale");
  }
  write_run_manifest(c.paths.models, "train-ldm", c, {{kLdmFile, ckpt::file_hash(c.paths.models / kLdmFile)}});
}

raster::Texture prepare_condition(const raster::Texture& image, const std::string& mode) {
  if (mode == "sketch") return image;
  if (mode == "two_color") return raster::quantize_two_color(image).image;
  throw InvalidArgument("unknown condition mode \"" + mode + "\"");
}

std::string adapter_condition_mode(const fs::path& models) {
  return ckpt::load(models / kControlFile).metadata.value("condition", "sketch");
}

void train_adapter(const PipelineConfig& c, const Logger& log) {
  require_dataset(c.paths.dataset);
  const latent::VaeModel hv = load_vae(c.paths.models, kHeightVaeFile);
  const latent::VaeModel xv = load_vae(c.paths.models, kTextureVaeFile);
  require_file(c.paths.models / kLdmFile, "run train-ldm first");
  const diffusion::JointModel base = diffusion::joint_from_checkpoint(ckpt::load(c.paths.models / kLdmFile));
  if (c.control.downsample != hv.config.downsample)
    throw InvalidArgument("control.adapter.downsample must equal the VAE downsample");

  const auto entries = synth::load_dataset(c.paths.dataset);
  if (entries.empty()) throw InvalidArgument("dataset is empty");
  std::vector<control::FTensor> conds;
  for (const auto& e : entries) {
    if (c.condition == "sketch") {
      if (!e.sketch) throw InvalidArgument("pair " + e.id + " has no sketch; run sketch-extract first");
      conds.push_back(control::condition_tensor(*e.sketch));
    } else {
      conds.push_back(control::condition_tensor(prepare_condition(e.pair.texture, c.condition)));
    }
  }
  say(log, "encoding " + std::to_string(entries.size()) + " pairs");
  const LatentSet lat = encode_pairs(hv, xv, pairs_of(entries));

  control::ControlTrainConfig tc = c.control_train;
  tc.seed = stage_seed(c, "control");
  tc.checkpoint_dir = c.paths.models / "checkpoints";
  const control::ControlModel init = control::init_adapter(base, c.control, substream_seed(tc.seed, "init"));
  ckpt::Checkpoint ck = control::train_control(lat.zh, lat.zx, conds, init, tc, std::nullopt, [&](int epoch, double loss) {
    say(log, "adapter epoch " + std::to_string(epoch + 1) + ": loss " + std::to_string(loss));
  });
  ck.metadata["condition"] = c.condition;
  ckpt::save(c.paths.models / kControlFile, ck);
  write_run_manifest(c.paths.models, "train-control", c, {{kControlFile, ckpt::file_hash(c.paths.models / kControlFile)}});
}

void sample(const PipelineConfig& c, const Logger& log) {
  const Generator g = load_generator(c.paths.models);
  std::optional<raster::Texture> cond;
  if (c.sketch) {
    require_file(*c.sketch, "check --sketch");
    if (!g.control) throw InvalidArgument("a condition image needs a trained adapter; run train-control first");
    cond = prepare_condition(raster::decode_texture_png(raster::read_file(*c.sketch)),
                             adapter_condition_mode(c.paths.models));
  }
  say(log, "sampling " + std::to_string(c.sample_count) + " pairs with " + std::to_string(c.sample.steps) + " steps");
  auto pairs = generate(g, c.sample_count, c.seed, c.sample, cond);
  std::vector<PairRecord> recs;
  for (size_t i = 0; i < pairs.size(); ++i) {
    raster::Sidecar side{pairs[i].height.resolution_m, "sample:" + std::to_string(c.seed) + ":" + std::to_string(i),
                         pairs[i].height.max_elevation()};
    recs.push_back({pad_id("sample_", i), std::move(pairs[i]), side});
  }
  const json info{{"seed", c.seed},
                  {"steps", c.sample.steps},
                  {"sampler", c.sample.sampler},
                  {"conditional", cond.has_value()},
                  {"checkpoint_hash", g.checkpoint_hash}};
  write_pair_dataset(c.paths.samples, recs, info, std::nullopt, 1);
  write_run_manifest(c.paths.samples, "sample", c, hash_tree(c.paths.samples));
}

metrics::EvaluationReport evaluate(const PipelineConfig& c, const Logger& log) {
  require_dataset(c.paths.dataset);
  require_file(c.paths.samples / "manifest.json", "run sample first or point paths.samples at a dataset");
  const latent::VaeModel xv = load_vae(c.paths.models, kTextureVaeFile);
  const auto samples = pairs_of(synth::load_dataset(c.paths.samples));
  const auto reference = pairs_of(synth::load_dataset(c.paths.dataset));
  if (samples.size() < 2 || reference.size() < 2) throw InvalidArgument("evaluate needs at least two pairs per set");
  const metrics::EvaluationReport report = metrics::evaluate_model(samples, reference, metrics::vae_feature_extractor(xv));
  metrics::write_report(report, c.paths.report);
  Rng rng = Rng::substream(c.seed, "evaluate");
  const metrics::PairingTest pt = metrics::pairing_permutation_test(samples, c.permutations, rng);
  raster::write_file_atomic(c.paths.report / "pairing.json",
                            json{{"aligned_mean", pt.aligned_mean},
                                 {"shuffled_mean", pt.shuffled_mean},
                                 {"p_value", pt.p_value},
                                 {"permutations", c.permutations}}
                                    .dump(2) + "\n");
  say(log, "mean correlation: samples " + std::to_string(report.samples.mean) + ", reference " +
               std::to_string(report.reference.mean) + "; frechet " + std::to_string(report.frechet));
  write_run_manifest(c.paths.report, "evaluate", c, hash_tree(c.paths.report));
  return report;
}

}  // namespace terra::pipeline
