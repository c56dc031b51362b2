#include "terra/pipeline/config.hpp"

#include <algorithm>
#include <fstream>

#include "terra/core/hash.hpp"
#include "terra/core/parallel.hpp"
#include "terra/core/rng.hpp"

namespace terra::pipeline {

namespace {

using nlohmann::json;

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw InvalidArgument(where + ": expected a JSON object");
  for (const auto& [key, _] : j.items())
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
      throw InvalidArgument(where + ": unknown key \"" + key + "\"");
}

template <typename T>
void get(const json& j, const char* key, T& field) {
  if (j.contains(key)) field = j.at(key).get<T>();
}

ad::AdamConfig adam_from_json(const json& j, ad::AdamConfig a) {
  get(j, "lr", a.lr);
  get(j, "beta1", a.beta1);
  get(j, "beta2", a.beta2);
  get(j, "eps", a.eps);
  get(j, "weight_decay", a.weight_decay);
  if (!(a.lr > 0)) throw InvalidArgument("lr must be positive");
  return a;
}

json adam_json(const ad::AdamConfig& a) {
  return {{"lr", a.lr}, {"beta1", a.beta1}, {"beta2", a.beta2}, {"eps", a.eps}, {"weight_decay", a.weight_decay}};
}

#define TERRA_ADAM_KEYS "lr", "beta1", "beta2", "eps", "weight_decay"

void check_epochs(int epochs, int batch, int every, const std::string& where) {
  if (epochs < 0) throw InvalidArgument(where + ": epochs must be non-negative");
  if (batch < 1) throw InvalidArgument(where + ": batch_size must be positive");
  if (every < 0) throw InvalidArgument(where + ": checkpoint_every must be non-negative");
}

raster::Climate climate_from_string(const std::string& s) {
  for (auto c : {raster::Climate::kTropical, raster::Climate::kTemperate, raster::Climate::kSubarctic,
                 raster::Climate::kPolar, raster::Climate::kArid, raster::Climate::kOther})
    if (raster::to_string(c) == s) return c;
  throw InvalidArgument("unknown climate \"" + s + "\"");
}

raster::RegionMetadata region_from_json(const json& j) {
  check_keys(j, {"mean_elevation_m", "human_modification", "climate", "landcover"}, "region");
  raster::RegionMetadata m;
  get(j, "mean_elevation_m", m.mean_elevation_m);
  get(j, "human_modification", m.human_modification);
  if (j.contains("climate")) m.climate = climate_from_string(j.at("climate").get<std::string>());
  if (j.contains("landcover")) {
    const auto& l = j.at("landcover");
    check_keys(l, {"cropland", "built_up", "water", "cloud"}, "landcover");
    get(l, "cropland", m.landcover.cropland);
    get(l, "built_up", m.landcover.built_up);
    get(l, "water", m.landcover.water);
    get(l, "cloud", m.landcover.cloud);
  }
  return m;
}

json region_json(const raster::RegionMetadata& m) {
  return {{"mean_elevation_m", m.mean_elevation_m},
          {"human_modification", m.human_modification},
          {"climate", std::string(raster::to_string(m.climate))},
          {"landcover",
           {{"cropland", m.landcover.cropland},
            {"built_up", m.landcover.built_up},
            {"water", m.landcover.water},
            {"cloud", m.landcover.cloud}}}};
}

geomorph::SketchConfig sketch_from_json(const json& j) {
  check_keys(j, {"valley_percentile", "ridge_percentile", "epsilon", "canny"}, "dataset.sketch");
  geomorph::SketchConfig s;
  get(j, "valley_percentile", s.valley_percentile);
  get(j, "ridge_percentile", s.ridge_percentile);
  get(j, "epsilon", s.epsilon);
  if (j.contains("canny")) {
    const auto& c = j.at("canny");
    check_keys(c, {"sigma", "low", "high"}, "dataset.sketch.canny");
    get(c, "sigma", s.canny.sigma);
    get(c, "low", s.canny.low);
    get(c, "high", s.canny.high);
  }
  return s;
}

json sketch_json(const geomorph::SketchConfig& s) {
  return {{"valley_percentile", s.valley_percentile},
          {"ridge_percentile", s.ridge_percentile},
          {"epsilon", s.epsilon},
          {"canny", {{"sigma", s.canny.sigma}, {"low", s.canny.low}, {"high", s.canny.high}}}};
}

DemConfig dem_from_json(const json& j) {
  check_keys(j, {"tiles", "source_resolution_m", "resolution_m", "patch_px", "out_px", "elevation_limit_m", "region_filter"},
             "dataset.dem");
  DemConfig d;
  get(j, "source_resolution_m", d.source_resolution_m);
  get(j, "resolution_m", d.resolution_m);
  get(j, "patch_px", d.patch_px);
  get(j, "out_px", d.out_px);
  get(j, "elevation_limit_m", d.elevation_limit_m);
  if (j.contains("region_filter")) {
    const auto& r = j.at("region_filter");
    check_keys(r, {"min_mean_elevation_m", "max_human_modification", "per_category_cap"}, "dataset.dem.region_filter");
    get(r, "min_mean_elevation_m", d.region_filter.min_mean_elevation_m);
    get(r, "max_human_modification", d.region_filter.max_human_modification);
    get(r, "per_category_cap", d.region_filter.per_category_cap);
  }
  if (j.contains("tiles"))
    for (const auto& t : j.at("tiles")) {
      check_keys(t, {"id", "hgt", "texture", "region"}, "dataset.dem.tiles[]");
      DemTile tile;
      tile.id = t.at("id").get<std::string>();
      tile.hgt = t.at("hgt").get<std::string>();
      tile.texture = t.at("texture").get<std::string>();
      if (t.contains("region")) tile.region = region_from_json(t.at("region"));
      d.tiles.push_back(std::move(tile));
    }
  return d;
}

json dem_json(const DemConfig& d) {
  json tiles = json::array();
  for (const auto& t : d.tiles) {
    json e{{"id", t.id}, {"hgt", t.hgt.string()}, {"texture", t.texture.string()}};
    if (t.region) e["region"] = region_json(*t.region);
    tiles.push_back(std::move(e));
  }
  return {{"tiles", tiles},
          {"source_resolution_m", d.source_resolution_m},
          {"resolution_m", d.resolution_m},
          {"patch_px", d.patch_px},
          {"out_px", d.out_px},
          {"elevation_limit_m", d.elevation_limit_m},
          {"region_filter",
           {{"min_mean_elevation_m", d.region_filter.min_mean_elevation_m},
            {"max_human_modification", d.region_filter.max_human_modification},
            {"per_category_cap", d.region_filter.per_category_cap}}}};
}

PipelineConfig parse(const json& j) {
  check_keys(j, {"seed", "threads", "paths", "dataset", "vae", "ldm", "control", "sample", "evaluate", "service"}, "config");
  PipelineConfig c;
  c.texture_vae.modality = latent::Modality::kTexture;
  get(j, "seed", c.seed);
  get(j, "threads", c.threads);

  if (j.contains("paths")) {
    const auto& p = j.at("paths");
    check_keys(p, {"dataset", "models", "samples", "report", "sketches"}, "paths");
    auto path = [&](const char* key, std::filesystem::path& field) {
      if (p.contains(key)) field = p.at(key).get<std::string>();
    };
    path("dataset", c.paths.dataset);
    path("models", c.paths.models);
    path("samples", c.paths.samples);
    path("report", c.paths.report);
    path("sketches", c.paths.sketches);
  }

  if (j.contains("dataset")) {
    const auto& d = j.at("dataset");
    check_keys(d, {"source", "count", "synth", "dem", "sketch"}, "dataset");
    get(d, "source", c.dataset.source);
    get(d, "count", c.dataset.count);
    if (d.contains("synth")) {
      if (d.at("synth").contains("seed")) throw InvalidArgument("dataset.synth: the seed comes from the top-level seed");
      c.dataset.synth = synth::synth_config_from_json(d.at("synth"));
    }
    if (d.contains("dem")) c.dataset.dem = dem_from_json(d.at("dem"));
    if (d.contains("sketch")) c.dataset.sketch = sketch_from_json(d.at("sketch"));
  }

  if (j.contains("vae")) {
    const auto& v = j.at("vae");
    check_keys(v, {"heightmap", "texture", "train"}, "vae");
    if (v.contains("heightmap")) c.height_vae = latent::vae_config_from_json(v.at("heightmap"), c.height_vae);
    if (v.contains("texture")) c.texture_vae = latent::vae_config_from_json(v.at("texture"), c.texture_vae);
    if (v.contains("train")) {
      const auto& t = v.at("train");
      check_keys(t, {"epochs", "batch_size", "crop_px", "checkpoint_every", TERRA_ADAM_KEYS}, "vae.train");
      get(t, "epochs", c.vae_train.epochs);
      get(t, "batch_size", c.vae_train.batch_size);
      get(t, "crop_px", c.vae_train.crop_px);
      get(t, "checkpoint_every", c.vae_train.checkpoint_every);
      c.vae_train.adam = adam_from_json(t, c.vae_train.adam);
    }
  }

  if (j.contains("ldm")) {
    const auto& l = j.at("ldm");
    check_keys(l, {"denoiser", "schedule", "train", "texture_pretrain_epochs", "extension_init_scale"}, "ldm");
    if (l.contains("denoiser")) {
      check_keys(l.at("denoiser"), {"width", "time_dim"}, "ldm.denoiser");
      c.denoiser = diffusion::denoiser_config_from_json(l.at("denoiser"), c.denoiser);
    }
    if (l.contains("schedule")) c.schedule = diffusion::schedule_config_from_json(l.at("schedule"), c.schedule);
    if (l.contains("train")) {
      const auto& t = l.at("train");
      check_keys(t, {"epochs", "batch_size", "checkpoint_every", TERRA_ADAM_KEYS}, "ldm.train");
      get(t, "epochs", c.ldm_train.epochs);
      get(t, "batch_size", c.ldm_train.batch_size);
      get(t, "checkpoint_every", c.ldm_train.checkpoint_every);
      c.ldm_train.adam = adam_from_json(t, c.ldm_train.adam);
    }
    get(l, "texture_pretrain_epochs", c.texture_pretrain_epochs);
    get(l, "extension_init_scale", c.extension_init_scale);
  }

  if (j.contains("control")) {
    const auto& k = j.at("control");
    check_keys(k, {"adapter", "train", "condition"}, "control");
    if (k.contains("adapter")) c.control = control::control_config_from_json(k.at("adapter"), c.control);
    if (k.contains("train")) {
      const auto& t = k.at("train");
      check_keys(t, {"epochs", "batch_size", "checkpoint_every", "condition_dropout", TERRA_ADAM_KEYS}, "control.train");
      get(t, "epochs", c.control_train.epochs);
      get(t, "batch_size", c.control_train.batch_size);
      get(t, "checkpoint_every", c.control_train.checkpoint_every);
      get(t, "condition_dropout", c.control_train.condition_dropout);
      c.control_train.adam = adam_from_json(t, c.control_train.adam);
    }
    get(k, "condition", c.condition);
  }

  if (j.contains("sample")) {
    const auto& s = j.at("sample");
    check_keys(s, {"count", "steps", "sampler", "batch", "sketch"}, "sample");
    get(s, "count", c.sample_count);
    get(s, "steps", c.sample.steps);
    get(s, "sampler", c.sample.sampler);
    get(s, "batch", c.sample.batch);
    if (s.contains("sketch") && !s.at("sketch").is_null()) c.sketch = s.at("sketch").get<std::string>();
  }

  if (j.contains("evaluate")) {
    check_keys(j.at("evaluate"), {"permutations"}, "evaluate");
    get(j.at("evaluate"), "permutations", c.permutations);
  }
  if (j.contains("service")) c.service = service::service_config_from_json(j.at("service"));
  c.dataset.synth.seed = c.seed;
  c.validate();
  return c;
}

}  // namespace

int PipelineConfig::worker_threads() const { return threads > 0 ? threads : thread_count(); }

diffusion::DenoiserConfig PipelineConfig::joint_denoiser() const {
  diffusion::DenoiserConfig d = denoiser;
  d.in_channels = d.out_channels = 2 * height_vae.latent_channels;
  return d;
}

void PipelineConfig::validate() const {
  if (threads < 0) throw InvalidArgument("threads must be non-negative");
  if (dataset.source != "synthetic" && dataset.source != "dem")
    throw InvalidArgument("dataset.source must be \"synthetic\" or \"dem\"");
  if (dataset.count < 1) throw InvalidArgument("dataset.count must be positive");
  if (dataset.dem.patch_px < 2 || dataset.dem.out_px < dataset.dem.patch_px)
    throw InvalidArgument("dataset.dem: need 2 <= patch_px <= out_px");
  if (!(dataset.dem.resolution_m > 0) || !(dataset.dem.source_resolution_m > 0))
    throw InvalidArgument("dataset.dem: resolutions must be positive");
  if (height_vae.modality != latent::Modality::kHeightmap || texture_vae.modality != latent::Modality::kTexture)
    throw InvalidArgument("vae: heightmap and texture sections must keep their modality");
  if (height_vae.latent_channels != texture_vae.latent_channels || height_vae.downsample != texture_vae.downsample)
    throw InvalidArgument("vae: both VAEs need the same latent_channels and downsample");
  if (control.downsample != height_vae.downsample)
    throw InvalidArgument("control.adapter.downsample must equal the VAE downsample");
  check_epochs(vae_train.epochs, vae_train.batch_size, vae_train.checkpoint_every, "vae.train");
  check_epochs(ldm_train.epochs, ldm_train.batch_size, ldm_train.checkpoint_every, "ldm.train");
  check_epochs(control_train.epochs, control_train.batch_size, control_train.checkpoint_every, "control.train");
  if (vae_train.crop_px < 0) throw InvalidArgument("vae.train.crop_px must be non-negative");
  if (texture_pretrain_epochs < 0) throw InvalidArgument("ldm.texture_pretrain_epochs must be non-negative");
  if (extension_init_scale < 0) throw InvalidArgument("ldm.extension_init_scale must be non-negative");
  if (control_train.condition_dropout < 0 || control_train.condition_dropout > 1)
    throw InvalidArgument("control.train.condition_dropout must lie in [0, 1]");
  if (condition != "sketch" && condition != "two_color")
    throw InvalidArgument("control.condition must be \"sketch\" or \"two_color\"");
  if (sample_count < 1) throw InvalidArgument("sample.count must be positive");
  if (sample.steps < 1) throw InvalidArgument("sample.steps must be positive");
  if (sample.sampler != "ddim" && sample.sampler != "ddpm") throw InvalidArgument("sample.sampler must be ddim or ddpm");
  if (sample.batch < 1) throw InvalidArgument("sample.batch must be positive");
  if (permutations < 1) throw InvalidArgument("evaluate.permutations must be positive");
  joint_denoiser().validate();
}

PipelineConfig pipeline_config_from_json(const json& j) {
  try {
    return parse(j);
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("config: ") + e.what());
  }
}

json to_json(const PipelineConfig& c) {
  json synth = synth::to_json(c.dataset.synth);
  synth.erase("seed");
  json denoiser = diffusion::to_json(c.denoiser);
  denoiser.erase("in_channels");
  denoiser.erase("out_channels");
  json vae_train = adam_json(c.vae_train.adam);
  vae_train.update({{"epochs", c.vae_train.epochs},
                    {"batch_size", c.vae_train.batch_size},
                    {"crop_px", c.vae_train.crop_px},
                    {"checkpoint_every", c.vae_train.checkpoint_every}});
  json ldm_train = adam_json(c.ldm_train.adam);
  ldm_train.update({{"epochs", c.ldm_train.epochs},
                    {"batch_size", c.ldm_train.batch_size},
                    {"checkpoint_every", c.ldm_train.checkpoint_every}});
  json control_train = adam_json(c.control_train.adam);
  control_train.update({{"epochs", c.control_train.epochs},
                        {"batch_size", c.control_train.batch_size},
                        {"checkpoint_every", c.control_train.checkpoint_every},
                        {"condition_dropout", c.control_train.condition_dropout}});
  return {
      {"seed", c.seed},
      {"threads", c.threads},
      {"paths",
       {{"dataset", c.paths.dataset.string()},
        {"models", c.paths.models.string()},
        {"samples", c.paths.samples.string()},
        {"report", c.paths.report.string()},
        {"sketches", c.paths.sketches.string()}}},
      {"dataset",
       {{"source", c.dataset.source},
        {"count", c.dataset.count},
        {"synth", synth},
        {"dem", dem_json(c.dataset.dem)},
        {"sketch", sketch_json(c.dataset.sketch)}}},
      {"vae", {{"heightmap", latent::to_json(c.height_vae)}, {"texture", latent::to_json(c.texture_vae)}, {"train", vae_train}}},
      {"ldm",
       {{"denoiser", denoiser},
        {"schedule", diffusion::to_json(c.schedule)},
        {"train", ldm_train},
        {"texture_pretrain_epochs", c.texture_pretrain_epochs},
        {"extension_init_scale", c.extension_init_scale}}},
      {"control", {{"adapter", control::to_json(c.control)}, {"train", control_train}, {"condition", c.condition}}},
      {"sample",
       {{"count", c.sample_count},
        {"steps", c.sample.steps},
        {"sampler", c.sample.sampler},
        {"batch", c.sample.batch},
        {"sketch", c.sketch ? json(c.sketch->string()) : json(nullptr)}}},
      {"evaluate", {{"permutations", c.permutations}}},
      {"service", service::to_json(c.service)},
  };
}

PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw InvalidArgument("config " + path.string() + ": " + e.what());
  }
  return pipeline_config_from_json(j);
}

std::string config_hash(const PipelineConfig& c) { return to_hex(hash_string(to_json(c).dump())); }

uint64_t stage_seed(const PipelineConfig& c, const char* stage) { return substream_seed(c.seed, stage); }

}  // namespace terra::pipeline
