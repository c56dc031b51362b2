#include "terra/diffusion/ldm.hpp"

#include <cmath>

#include "terra/autodiff/batch.hpp"

namespace terra::diffusion {

namespace {

std::pair<double, double> moments(const std::vector<FTensor>& zs) {
  double s = 0, ss = 0;
  int64_t n = 0;
  for (const auto& z : zs)
    for (float v : z.data()) {
      s += v;
      ss += double(v) * v;
      ++n;
    }
  if (n < 2) throw InvalidArgument("latent statistics need at least two values");
  const double mean = s / n;
  const double var = std::max(0.0, ss / n - mean * mean);
  if (var <= 1e-12) throw NumericError("latents have zero variance");
  return {mean, std::sqrt(var)};
}

}  // namespace

LatentStats compute_latent_stats(const std::vector<FTensor>& zh, const std::vector<FTensor>& zx) {
  LatentStats st;
  std::tie(st.h_mean, st.h_std) = moments(zh);
  std::tie(st.x_mean, st.x_std) = moments(zx);
  return st;
}

nlohmann::json to_json(const LatentStats& s) {
  return {{"h_mean", s.h_mean}, {"h_std", s.h_std}, {"x_mean", s.x_mean}, {"x_std", s.x_std}};
}

LatentStats latent_stats_from_json(const nlohmann::json& j) {
  LatentStats s{j.at("h_mean").get<double>(), j.at("h_std").get<double>(), j.at("x_mean").get<double>(),
                j.at("x_std").get<double>()};
  if (!(s.h_std > 0 && s.x_std > 0)) throw FormatError("latent stats need positive std");
  return s;
}

FTensor standardise(const FTensor& z, double mean, double std) {
  FTensor out(z.shape());
  for (int64_t i = 0; i < z.numel(); ++i) out[i] = static_cast<float>((z[i] - mean) / std);
  return out;
}

FTensor destandardise(const FTensor& z, double mean, double std) {
  FTensor out(z.shape());
  for (int64_t i = 0; i < z.numel(); ++i) out[i] = static_cast<float>(z[i] * std + mean);
  return out;
}

nlohmann::json to_json(const ScheduleConfig& s) {
  return {{"T", s.T}, {"beta_start", s.beta_start}, {"beta_end", s.beta_end}};
}

ScheduleConfig schedule_config_from_json(const nlohmann::json& j, ScheduleConfig c) {
  if (j.contains("T")) c.T = j.at("T").get<int>();
  if (j.contains("beta_start")) c.beta_start = j.at("beta_start").get<double>();
  if (j.contains("beta_end")) c.beta_end = j.at("beta_end").get<double>();
  make_schedule(c.T, c.beta_start, c.beta_end);
  return c;
}

ckpt::Checkpoint joint_to_checkpoint(const JointModel& m, const std::optional<ad::OptimizerState<float>>& opt,
                                     nlohmann::json metadata) {
  ckpt::Checkpoint ck;
  ck.kind = "ldm";
  ck.config = {{"denoiser", to_json(m.denoiser.config)},
               {"schedule", to_json(m.schedule)},
               {"latent_stats", to_json(m.stats)},
               {"latent_channels", m.latent_channels},
               {"latent_size", m.latent_size}};
  ck.metadata = std::move(metadata);
  ck.params = m.denoiser.params;
  ck.optimizer = opt;
  return ck;
}

JointModel joint_from_checkpoint(const ckpt::Checkpoint& ck) {
  if (ck.kind != "ldm") throw InvalidArgument("checkpoint kind '" + ck.kind + "' is not a latent diffusion model");
  JointModel m;
  m.denoiser.config = denoiser_config_from_json(ck.config.at("denoiser"));
  m.denoiser.params = ck.params;
  m.schedule = schedule_config_from_json(ck.config.at("schedule"));
  m.stats = latent_stats_from_json(ck.config.at("latent_stats"));
  m.latent_channels = ck.config.at("latent_channels").get<int64_t>();
  m.latent_size = ck.config.value("latent_size", int64_t{0});
  const DenoiserModel ref = init_denoiser(m.denoiser.config, 0);
  for (const auto& [name, p] : ref.params)
    if (!m.denoiser.params.contains(name) || m.denoiser.params.at(name).value.shape() != p.value.shape())
      throw FormatError("LDM checkpoint is missing or misshapes parameter " + name);
  if (m.denoiser.config.in_channels != 2 * m.latent_channels)
    throw FormatError("LDM checkpoint channel counts are inconsistent");
  return m;
}

LossSample draw_loss_sample(const FTensor& z0, const NoiseSchedule& s, Rng& rng) {
  if (z0.rank() != 4) throw InvalidArgument("draw_loss_sample expects [N, c, h, w]");
  const int64_t N = z0.dim(0), per = z0.numel() / N;
  LossSample out;
  for (int64_t n = 0; n < N; ++n) out.t.push_back(1 + static_cast<int>(rng.below(static_cast<uint64_t>(s.T))));
  out.eps = ad::randn(z0.shape(), rng);
  out.zt = FTensor(z0.shape());
  for (int64_t n = 0; n < N; ++n) {
    const double ab = s.alpha_bar[out.t[n]];
    const double a = std::sqrt(ab), b = std::sqrt(1.0 - ab);
    for (int64_t i = n * per; i < (n + 1) * per; ++i)
      out.zt[i] = static_cast<float>(a * z0[i] + b * out.eps[i]);
  }
  return out;
}

FVar joint_loss(FBinder& b, const EpsGraph& predict, const FTensor& zh, const FTensor& zx, const NoiseSchedule& s,
                Rng& rng) {
  const LossSample smp = draw_loss_sample(fuse_latents(zh, zx), s, rng);
  auto& tape = b.tape();
  const FVar pred = predict(b, tape.constant(smp.zt), smp.t);
  return ad::mean_square(ad::sub(pred, tape.constant(smp.eps)));
}

FVar joint_loss(FBinder& b, const DenoiserConfig& cfg, const FTensor& zh, const FTensor& zx, const NoiseSchedule& s,
                Rng& rng) {
  return joint_loss(
      b, [&](FBinder& bb, const FVar& zt, const std::vector<int>& t) { return graph::forward(bb, cfg, zt, t); }, zh,
      zx, s, rng);
}

nlohmann::json to_json(const LdmTrainConfig& c) {
  return {{"seed", c.seed},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"lr", c.adam.lr},
          {"weight_decay", c.adam.weight_decay},
          {"checkpoint_every", c.checkpoint_every}};
}

ckpt::Checkpoint train_ldm(const std::vector<FTensor>& zh, const std::vector<FTensor>& zx, const JointModel& base,
                           const LdmTrainConfig& tc, const std::optional<ckpt::Checkpoint>& resume,
                           const std::function<void(int, double)>& on_epoch) {
  if (zh.empty() || zh.size() != zx.size()) throw InvalidArgument("train_ldm needs equally many heightmap and texture latents");
  if (tc.batch_size < 1 || tc.epochs < 0) throw InvalidArgument("train_ldm: invalid batch size or epoch count");
  for (size_t i = 0; i < zh.size(); ++i)
    if (zh[i].shape() != zh[0].shape() || zx[i].shape() != zh[0].shape())
      throw InvalidArgument("all latents must share one [c, h, w] shape");
  if (zh[0].rank() != 3 || zh[0].dim(0) != base.latent_channels ||
      base.denoiser.config.in_channels != 2 * base.latent_channels ||
      base.denoiser.config.out_channels != 2 * base.latent_channels)
    throw InvalidArgument("latent channels do not match the denoiser");

  JointModel model = base;
  model.latent_size = zh[0].dim(1);
  ad::OptimizerState<float> state;
  int start = 0;
  if (resume) {
    model = joint_from_checkpoint(*resume);
    if (to_json(model.denoiser.config) != to_json(base.denoiser.config))
      throw InvalidArgument("resume checkpoint has a different denoiser config");
    if (resume->optimizer) state = *resume->optimizer;
    start = resume->metadata.value("epoch", 0);
  }
  const NoiseSchedule sched = make_schedule(model.schedule.T, model.schedule.beta_start, model.schedule.beta_end);
  std::vector<FTensor> sh, sx;
  for (size_t i = 0; i < zh.size(); ++i) {
    sh.push_back(standardise(zh[i], model.stats.h_mean, model.stats.h_std));
    sx.push_back(standardise(zx[i], model.stats.x_mean, model.stats.x_std));
  }
  auto metadata = [&](int epoch) {
    return nlohmann::json{{"epoch", epoch}, {"seed", tc.seed}, {"train", to_json(tc)}, {"samples", zh.size()}};
  };

  for (int epoch = start; epoch < tc.epochs; ++epoch) {
    Rng rng = Rng::substream(tc.seed, "training", static_cast<uint64_t>(epoch));
    const auto order = ad::permutation(sh.size(), rng);
    double sum = 0;
    int batches = 0;
    for (size_t s = 0; s < order.size(); s += static_cast<size_t>(tc.batch_size)) {
      std::vector<const FTensor*> bh, bx;
      for (size_t i = s; i < std::min(order.size(), s + tc.batch_size); ++i) {
        bh.push_back(&sh[order[i]]);
        bx.push_back(&sx[order[i]]);
      }
      ad::Tape<float> tape;
      FBinder b(tape, model.denoiser.params);
      const FVar loss = joint_loss(b, model.denoiser.config, ad::stack(bh), ad::stack(bx), sched, rng);
      sum += loss.value().item();
      ++batches;
      ad::adamw_step(model.denoiser.params, ad::backward(b, loss), state, tc.adam);
    }
    if (on_epoch) on_epoch(epoch + 1, sum / batches);
    if (tc.checkpoint_every > 0 && (epoch + 1) % tc.checkpoint_every == 0 && !tc.checkpoint_dir.empty())
      ckpt::save(tc.checkpoint_dir / ("ldm_epoch" + std::to_string(epoch + 1) + ".tfck"),
                 joint_to_checkpoint(model, state, metadata(epoch + 1)));
  }
  return joint_to_checkpoint(model, state, metadata(std::max(start, tc.epochs)));
}

DenoiserModel train_texture_prior(const std::vector<FTensor>& zx, const DenoiserModel& init, const ScheduleConfig& sc,
                                  const LdmTrainConfig& tc) {
  if (zx.empty()) throw InvalidArgument("train_texture_prior: no latents");
  if (init.config.in_channels != zx[0].dim(0) || init.config.out_channels != zx[0].dim(0))
    throw InvalidArgument("texture prior channels must match the latent channels");
  const NoiseSchedule sched = make_schedule(sc.T, sc.beta_start, sc.beta_end);
  DenoiserModel model = init;
  ad::OptimizerState<float> state;
  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    Rng rng = Rng::substream(tc.seed, "training", static_cast<uint64_t>(epoch));
    const auto order = ad::permutation(zx.size(), rng);
    for (size_t s = 0; s < order.size(); s += static_cast<size_t>(tc.batch_size)) {
      std::vector<const FTensor*> items;
      for (size_t i = s; i < std::min(order.size(), s + tc.batch_size); ++i) items.push_back(&zx[order[i]]);
      const LossSample smp = draw_loss_sample(ad::stack(items), sched, rng);
      ad::Tape<float> tape;
      FBinder b(tape, model.params);
      const FVar pred = graph::forward(b, model.config, tape.constant(smp.zt), smp.t);
      const FVar loss = ad::mean_square(ad::sub(pred, tape.constant(smp.eps)));
      ad::adamw_step(model.params, ad::backward(b, loss), state, tc.adam);
    }
  }
  return model;
}

EpsFn eps_fn(const DenoiserModel& m) {
  return [m](const FTensor& z, int t) {
    return predict_eps(m, z, std::vector<int>(static_cast<size_t>(z.dim(0)), t));
  };
}

}  // namespace terra::diffusion
