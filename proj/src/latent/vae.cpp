#include "terra/latent/vae.hpp"

#include <algorithm>
#include <cmath>

#include "terra/autodiff/batch.hpp"
#include "terra/raster/normalize.hpp"

namespace terra::latent {

using ad::nn::FBinder;
using ad::nn::FVar;
namespace nn = ad::nn;

namespace {

int levels(const VaeConfig& c) {
  int l = 0;
  for (int64_t f = c.downsample; f > 1; f /= 2) ++l;
  return l;
}

std::string idx(const std::string& base, int i) { return base + std::to_string(i); }

}  // namespace

std::string to_string(Modality m) { return m == Modality::kHeightmap ? "heightmap" : "texture"; }

Modality modality_from_string(const std::string& s) {
  if (s == "heightmap") return Modality::kHeightmap;
  if (s == "texture") return Modality::kTexture;
  throw InvalidArgument("unknown modality '" + s + "' (expected heightmap or texture)");
}

void VaeConfig::validate() const {
  if (downsample < 1 || (downsample & (downsample - 1)) != 0) throw InvalidArgument("VAE downsample must be a power of two");
  if (static_cast<int>(channels.size()) != levels(*this) + 1)
    throw InvalidArgument("VAE needs log2(f) + 1 channel entries");
  if (latent_channels < 1) throw InvalidArgument("latent channel count must be positive");
  if (res_blocks < 0) throw InvalidArgument("res_blocks must be non-negative");
  if (!(beta >= 0.0)) throw InvalidArgument("beta must be non-negative");
  if (!(h_max > 0.0)) throw InvalidArgument("H_max must be positive");
  for (int64_t c : channels) nn::group_count(c);
}

nlohmann::json to_json(const VaeConfig& c) {
  return {{"modality", to_string(c.modality)}, {"latent_channels", c.latent_channels}, {"downsample", c.downsample},
          {"channels", c.channels},           {"res_blocks", c.res_blocks},           {"beta", c.beta},
          {"h_max", c.h_max}};
}

VaeConfig vae_config_from_json(const nlohmann::json& j, VaeConfig c) {
  if (j.contains("modality")) c.modality = modality_from_string(j.at("modality").get<std::string>());
  if (j.contains("latent_channels")) c.latent_channels = j.at("latent_channels").get<int64_t>();
  if (j.contains("downsample")) c.downsample = j.at("downsample").get<int64_t>();
  if (j.contains("channels")) c.channels = j.at("channels").get<std::vector<int64_t>>();
  if (j.contains("res_blocks")) c.res_blocks = j.at("res_blocks").get<int>();
  if (j.contains("beta")) c.beta = j.at("beta").get<double>();
  if (j.contains("h_max")) c.h_max = j.at("h_max").get<double>();
  c.validate();
  return c;
}

VaeModel init_vae(const VaeConfig& cfg, uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  VaeModel m{cfg, {}};
  auto& p = m.params;
  const int L = levels(cfg);
  const auto& ch = cfg.channels;
  nn::add_conv(p, "enc.conv_in", cfg.in_channels(), ch[0], 3, rng);
  nn::add_group_norm(p, "enc.norm_in", ch[0]);
  for (int i = 0; i < L; ++i) {
    nn::add_conv(p, idx("enc.down", i), ch[i], ch[i + 1], 3, rng);
    nn::add_group_norm(p, idx("enc.down", i) + "_norm", ch[i + 1]);
  }
  for (int r = 0; r < cfg.res_blocks; ++r) nn::add_res_block(p, idx("enc.mid", r), ch[L], ch[L], 0, rng);
  nn::add_group_norm(p, "enc.norm_out", ch[L]);
  nn::add_conv(p, "enc.conv_out", ch[L], 2 * cfg.latent_channels, 3, rng);

  nn::add_conv(p, "dec.conv_in", cfg.latent_channels, ch[L], 3, rng);
  for (int r = 0; r < cfg.res_blocks; ++r) nn::add_res_block(p, idx("dec.mid", r), ch[L], ch[L], 0, rng);
  for (int i = L - 1; i >= 0; --i) {
    nn::add_conv(p, idx("dec.up", i), ch[i + 1], ch[i], 3, rng);
    nn::add_group_norm(p, idx("dec.up", i) + "_norm", ch[i]);
  }
  nn::add_conv(p, "dec.conv_out", ch[0], cfg.in_channels(), 3, rng);
  return m;
}

namespace graph {

EncoderOut encode(FBinder& b, const VaeConfig& cfg, const FVar& x) {
  const int L = levels(cfg);
  if (x.shape().size() != 4 || x.shape()[1] != cfg.in_channels()) throw InvalidArgument("VAE encoder input has wrong channels");
  if (x.shape()[2] % cfg.downsample != 0 || x.shape()[3] % cfg.downsample != 0)
    throw InvalidArgument("image size " + std::to_string(x.shape()[2]) + "x" + std::to_string(x.shape()[3]) +
                          " is not divisible by f = " + std::to_string(cfg.downsample));
  FVar h = nn::norm_silu(b, "enc.norm_in", nn::conv(b, "enc.conv_in", x));
  for (int i = 0; i < L; ++i) h = nn::norm_silu(b, idx("enc.down", i) + "_norm", nn::conv(b, idx("enc.down", i), h, 2));
  for (int r = 0; r < cfg.res_blocks; ++r) h = nn::res_block(b, idx("enc.mid", r), h, std::nullopt);
  h = nn::conv(b, "enc.conv_out", nn::norm_silu(b, "enc.norm_out", h));
  auto parts = ad::split_channels(h, {cfg.latent_channels, cfg.latent_channels});
  return {parts[0], parts[1]};
}

FVar decode(FBinder& b, const VaeConfig& cfg, const FVar& z) {
  const int L = levels(cfg);
  if (z.shape().size() != 4 || z.shape()[1] != cfg.latent_channels) throw InvalidArgument("VAE decoder input has wrong channels");
  FVar h = nn::conv(b, "dec.conv_in", z);
  for (int r = 0; r < cfg.res_blocks; ++r) h = nn::res_block(b, idx("dec.mid", r), h, std::nullopt);
  for (int i = L - 1; i >= 0; --i)
    h = nn::norm_silu(b, idx("dec.up", i) + "_norm", nn::conv(b, idx("dec.up", i), ad::upsample_nearest2x(h)));
  return nn::conv(b, "dec.conv_out", h);
}

FVar kl(const FVar& mean, const FVar& logvar) {
  const FVar inner = ad::sub(ad::add(ad::mul(mean, mean), ad::exp(logvar)), logvar);
  return ad::scalar_affine(ad::mean(inner), 0.5f, -0.5f);
}

}  // namespace graph

FTensor heightmap_tensor(const raster::Heightmap& hm, double h_max) {
  return FTensor({1, hm.height, hm.width}, raster::normalize_height(hm, {h_max}));
}

FTensor texture_tensor(const raster::Texture& tex) {
  return FTensor({3, tex.height, tex.width}, raster::texture_to_unit(tex));
}

raster::Heightmap heightmap_from_tensor(const FTensor& t, double h_max, double resolution_m) {
  std::vector<float> v(t.data().begin(), t.data().end());
  for (float& x : v) x = std::clamp(x, -1.0f, 1.0f);
  return raster::denormalize_height(v, static_cast<int>(t.dim(2)), static_cast<int>(t.dim(1)), {h_max}, resolution_m);
}

raster::Texture texture_from_tensor(const FTensor& t) {
  return raster::texture_from_unit(t.data(), static_cast<int>(t.dim(2)), static_cast<int>(t.dim(1)));
}

namespace {

FTensor as_batch(const FTensor& t) {
  if (t.rank() == 3) return t.reshaped({1, t.dim(0), t.dim(1), t.dim(2)});
  if (t.rank() != 4) throw InvalidArgument("expected a [C,H,W] or [N,C,H,W] tensor");
  return t;
}

FTensor restore_rank(const FTensor& out, const FTensor& in) {
  if (in.rank() == 3) return out.reshaped({out.dim(1), out.dim(2), out.dim(3)});
  return out;
}

}  // namespace

Posterior vae_posterior(const VaeModel& m, const FTensor& images) {
  ad::Tape<float> tape(false);
  FBinder b(tape, m.params);
  const auto out = graph::encode(b, m.config, tape.constant(as_batch(images)));
  return {restore_rank(out.mean.value(), images), restore_rank(out.logvar.value(), images)};
}

LatentGrid vae_encode(const VaeModel& m, const FTensor& images, Rng* rng) {
  Posterior post = vae_posterior(m, images);
  if (rng) {
    auto mu = post.mean.data();
    auto lv = post.logvar.data();
    for (size_t i = 0; i < mu.size(); ++i) mu[i] += static_cast<float>(std::exp(0.5 * lv[i]) * rng->normal());
  }
  return {std::move(post.mean), m.config.modality};
}

FTensor vae_decode(const VaeModel& m, const FTensor& z) {
  ad::Tape<float> tape(false);
  FBinder b(tape, m.params);
  FTensor out = graph::decode(b, m.config, tape.constant(as_batch(z))).value();
  for (float& v : out.data()) v = std::clamp(v, -1.0f, 1.0f);
  return restore_rank(out, z);
}

double kl_divergence(const FTensor& mean, const FTensor& logvar) {
  if (mean.shape() != logvar.shape()) throw InvalidArgument("kl_divergence: shape mismatch");
  double s = 0;
  for (int64_t i = 0; i < mean.numel(); ++i) {
    const double mu = mean[i], lv = logvar[i];
    s += mu * mu + std::exp(lv) - 1.0 - lv;
  }
  return 0.5 * s / static_cast<double>(mean.numel());
}

VaeLossTerms vae_loss(FBinder& b, const VaeConfig& cfg, const FTensor& batch, Rng& rng, double beta) {
  auto& tape = b.tape();
  const FVar x = tape.constant(batch);
  const auto post = graph::encode(b, cfg, x);
  const FVar eps = tape.constant(ad::randn(post.mean.shape(), rng));
  const FVar z = ad::add(post.mean, ad::mul(ad::exp(ad::scalar_affine(post.logvar, 0.5f)), eps));
  const FVar rec = ad::mean_square(ad::sub(graph::decode(b, cfg, z), x));
  const FVar kl = graph::kl(post.mean, post.logvar);
  return {ad::add(rec, ad::scalar_affine(kl, static_cast<float>(beta))), rec, kl};
}

nlohmann::json to_json(const VaeTrainConfig& c) {
  return {{"seed", c.seed},       {"epochs", c.epochs},   {"batch_size", c.batch_size},
          {"crop_px", c.crop_px}, {"lr", c.adam.lr},      {"beta1", c.adam.beta1},
          {"beta2", c.adam.beta2}, {"eps", c.adam.eps},   {"weight_decay", c.adam.weight_decay}};
}

ckpt::Checkpoint vae_to_checkpoint(const VaeModel& m, const std::optional<ad::OptimizerState<float>>& opt,
                                   nlohmann::json metadata) {
  ckpt::Checkpoint ck;
  ck.kind = "vae";
  ck.config = to_json(m.config);
  ck.metadata = std::move(metadata);
  ck.params = m.params;
  ck.optimizer = opt;
  return ck;
}

VaeModel vae_from_checkpoint(const ckpt::Checkpoint& ck) {
  if (ck.kind != "vae") throw InvalidArgument("checkpoint kind '" + ck.kind + "' is not a VAE");
  VaeModel m{vae_config_from_json(ck.config), ck.params};
  const VaeModel ref = init_vae(m.config, 0);
  for (const auto& [name, p] : ref.params)
    if (!m.params.contains(name) || m.params.at(name).value.shape() != p.value.shape())
      throw FormatError("VAE checkpoint is missing or misshapes parameter " + name);
  return m;
}

ckpt::Checkpoint train_vae(const std::vector<FTensor>& images, const VaeConfig& cfg, const VaeTrainConfig& tc,
                           const std::optional<ckpt::Checkpoint>& resume,
                           const std::function<void(const EpochReport&)>& on_epoch) {
  if (images.empty()) throw InvalidArgument("train_vae: dataset is empty");
  if (tc.batch_size < 1 || tc.epochs < 0) throw InvalidArgument("train_vae: invalid batch size or epoch count");
  VaeModel model = init_vae(cfg, substream_seed(tc.seed, "init"));
  ad::OptimizerState<float> state;
  int start = 0;
  if (resume) {
    model = vae_from_checkpoint(*resume);
    if (to_json(model.config) != to_json(cfg)) throw InvalidArgument("resume checkpoint has a different VAE config");
    if (resume->optimizer) state = *resume->optimizer;
    start = resume->metadata.value("epoch", 0);
  }
  auto metadata = [&](int epoch) {
    return nlohmann::json{{"epoch", epoch}, {"seed", tc.seed}, {"train", to_json(tc)},
                          {"modality", to_string(cfg.modality)}, {"samples", images.size()}};
  };

  const int64_t H = images[0].dim(1), W = images[0].dim(2);
  const int64_t crop = tc.crop_px > 0 ? std::min<int64_t>(tc.crop_px, std::min(H, W)) : 0;
  for (int epoch = start; epoch < tc.epochs; ++epoch) {
    Rng rng = Rng::substream(tc.seed, "training", static_cast<uint64_t>(epoch));
    const auto order = ad::permutation(images.size(), rng);
    double sum_loss = 0, sum_rec = 0, sum_kl = 0;
    int batches = 0;
    for (size_t s = 0; s < order.size(); s += static_cast<size_t>(tc.batch_size)) {
      std::vector<FTensor> items;
      for (size_t i = s; i < std::min(order.size(), s + tc.batch_size); ++i) {
        const FTensor& img = images[order[i]];
        if (crop > 0) {
          const int64_t x0 = static_cast<int64_t>(rng.below(static_cast<uint64_t>(img.dim(2) - crop + 1)));
          const int64_t y0 = static_cast<int64_t>(rng.below(static_cast<uint64_t>(img.dim(1) - crop + 1)));
          items.push_back(ad::crop(img, x0, y0, crop));
        } else {
          items.push_back(img);
        }
      }
      ad::Tape<float> tape;
      FBinder b(tape, model.params);
      const VaeLossTerms terms = vae_loss(b, cfg, ad::stack(items), rng, cfg.beta);
      sum_loss += terms.total.value().item();
      sum_rec += terms.reconstruction.value().item();
      sum_kl += terms.kl.value().item();
      ++batches;
      const auto grads = ad::backward(b, terms.total);
      ad::adamw_step(model.params, grads, state, tc.adam);
    }
    if (on_epoch) on_epoch({epoch + 1, sum_loss / batches, sum_rec / batches, sum_kl / batches});
    if (tc.checkpoint_every > 0 && (epoch + 1) % tc.checkpoint_every == 0 && !tc.checkpoint_dir.empty())
      ckpt::save(tc.checkpoint_dir / ("vae_" + to_string(cfg.modality) + "_epoch" + std::to_string(epoch + 1) + ".tfck"),
                 vae_to_checkpoint(model, state, metadata(epoch + 1)));
  }
  return vae_to_checkpoint(model, state, metadata(std::max(start, tc.epochs)));
}

double reconstruction_mse(const VaeModel& m, const std::vector<FTensor>& images) {
  if (images.empty()) throw InvalidArgument("reconstruction_mse: no images");
  double s = 0;
  int64_t n = 0;
  for (size_t i = 0; i < images.size(); i += 16) {
    std::vector<FTensor> chunk(images.begin() + static_cast<std::ptrdiff_t>(i),
                               images.begin() + static_cast<std::ptrdiff_t>(std::min(images.size(), i + 16)));
    const FTensor x = ad::stack(chunk);
    const FTensor y = vae_decode(m, vae_encode(m, x).z);
    for (int64_t k = 0; k < x.numel(); ++k) s += std::pow(double(x[k]) - double(y[k]), 2);
    n += x.numel();
  }
  return s / static_cast<double>(n);
}

}  // namespace terra::latent
