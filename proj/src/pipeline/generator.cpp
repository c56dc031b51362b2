#include "terra/pipeline/generator.hpp"

#include "terra/autodiff/batch.hpp"

namespace terra::pipeline {

namespace fs = std::filesystem;
using diffusion::FTensor;

LatentSet encode_pairs(const latent::VaeModel& height_vae, const latent::VaeModel& texture_vae,
                       const std::vector<raster::TerrainPair>& pairs) {
  LatentSet out;
  for (size_t s = 0; s < pairs.size(); s += 16) {
    std::vector<FTensor> h, x;
    for (size_t i = s; i < std::min(pairs.size(), s + 16); ++i) {
      h.push_back(latent::heightmap_tensor(pairs[i].height, height_vae.config.h_max));
      x.push_back(latent::texture_tensor(pairs[i].texture));
    }
    const FTensor mh = latent::vae_posterior(height_vae, ad::stack(h)).mean;
    const FTensor mx = latent::vae_posterior(texture_vae, ad::stack(x)).mean;
    for (int64_t i = 0; i < mh.dim(0); ++i) {
      out.zh.push_back(ad::unstack(mh, i));
      out.zx.push_back(ad::unstack(mx, i));
    }
  }
  return out;
}

Generator load_generator(const fs::path& dir) {
  for (const char* f : {kHeightVaeFile, kTextureVaeFile, kLdmFile})
    if (!fs::exists(dir / f)) throw InvalidArgument("missing checkpoint " + (dir / f).string());
  Generator g;
  g.height_vae = latent::vae_from_checkpoint(ckpt::load(dir / kHeightVaeFile));
  g.texture_vae = latent::vae_from_checkpoint(ckpt::load(dir / kTextureVaeFile));
  g.ldm = diffusion::joint_from_checkpoint(ckpt::load(dir / kLdmFile));
  if (g.height_vae.config.modality != latent::Modality::kHeightmap ||
      g.texture_vae.config.modality != latent::Modality::kTexture)
    throw InvalidArgument("VAE checkpoints hold the wrong modalities");
  if (g.height_vae.config.latent_channels != g.ldm.latent_channels ||
      g.texture_vae.config.latent_channels != g.ldm.latent_channels ||
      g.height_vae.config.downsample != g.texture_vae.config.downsample)
    throw InvalidArgument("VAE and LDM checkpoints disagree on the latent layout");
  if (g.ldm.latent_size < 2) throw InvalidArgument("LDM checkpoint does not record its latent size");
  for (const char* f : {kHeightVaeFile, kTextureVaeFile, kLdmFile}) g.checkpoint_files[f] = ckpt::file_hash(dir / f);
  if (fs::exists(dir / kControlFile)) {
    g.control = control::control_from_checkpoint(ckpt::load(dir / kControlFile), g.ldm);
    if (g.control->config.downsample != g.height_vae.config.downsample)
      throw InvalidArgument("control adapter downsample differs from the VAEs");
    g.checkpoint_files[kControlFile] = ckpt::file_hash(dir / kControlFile);
  }
  std::string hashes;
  for (const auto& [name, h] : g.checkpoint_files) hashes += name + ":" + h + ";";
  g.checkpoint_hash = ckpt::bytes_hash({reinterpret_cast<const uint8_t*>(hashes.data()), hashes.size()});
  return g;
}

std::vector<raster::TerrainPair> decode_latents(const Generator& g, const FTensor& z) {
  const int64_t c = g.ldm.latent_channels;
  auto [zh, zx] = diffusion::split_latents(z, c);
  const auto& st = g.ldm.stats;
  const FTensor h = latent::vae_decode(g.height_vae, diffusion::destandardise(zh, st.h_mean, st.h_std));
  const FTensor x = latent::vae_decode(g.texture_vae, diffusion::destandardise(zx, st.x_mean, st.x_std));
  std::vector<raster::TerrainPair> out;
  for (int64_t i = 0; i < z.dim(0); ++i)
    out.push_back({latent::heightmap_from_tensor(ad::unstack(h, i), g.height_vae.config.h_max),
                   latent::texture_from_tensor(ad::unstack(x, i))});
  return out;
}

std::vector<raster::TerrainPair> generate(const Generator& g, int count, uint64_t seed, const SampleOptions& opts,
                                          const std::optional<raster::Texture>& condition, uint64_t first_index) {
  if (count < 0) throw InvalidArgument("sample count must be non-negative");
  if (opts.batch < 1) throw InvalidArgument("sampling batch must be positive");
  if (opts.sampler != "ddim" && opts.sampler != "ddpm") throw InvalidArgument("sampler must be 'ddim' or 'ddpm'");
  diffusion::EpsFn eps;
  if (condition) {
    if (!g.control) throw InvalidArgument("a condition raster needs a trained control adapter");
    if (condition->width != g.resolution() || condition->height != g.resolution())
      throw InvalidArgument("condition raster must be " + std::to_string(g.resolution()) + "x" +
                            std::to_string(g.resolution()));
    eps = control::eps_fn(*g.control, control::condition_tensor(*condition));
  } else {
    eps = diffusion::eps_fn(g.ldm.denoiser);
  }
  const auto& sc = g.ldm.schedule;
  const diffusion::NoiseSchedule s = diffusion::make_schedule(sc.T, sc.beta_start, sc.beta_end);
  const ad::Shape item{2 * g.ldm.latent_channels, g.ldm.latent_size, g.ldm.latent_size};
  std::vector<raster::TerrainPair> out;
  for (int start = 0; start < count; start += opts.batch) {
    std::vector<uint64_t> seeds;
    for (int i = start; i < std::min(count, start + opts.batch); ++i)
      seeds.push_back(substream_seed(seed, "sampling", first_index + static_cast<uint64_t>(i)));
    const FTensor z = opts.sampler == "ddpm" ? diffusion::ddpm_sample(eps, s, item, seeds)
                                             : diffusion::strided_sample(eps, s, opts.steps, item, seeds);
    for (auto& p : decode_latents(g, z)) out.push_back(std::move(p));
  }
  return out;
}

}  // namespace terra::pipeline
