#include "terra/control/adapter.hpp"

#include "terra/autodiff/batch.hpp"

namespace terra::control {

namespace nn = ad::nn;
using diffusion::DenoiserConfig;

namespace {

const char* const kEncoderBlocks[] = {"conv_in.", "rb0.", "down.", "rb1.", "mid."};

// Strides of the three embedding convs; their product is the downsample factor.
std::array<int, 3> embed_strides(int64_t f) {
  switch (f) {
    case 1: return {1, 1, 1};
    case 2: return {1, 1, 2};
    case 4: return {1, 2, 2};
    case 8: return {2, 2, 2};
    default: throw InvalidArgument("condition downsample must be 1, 2, 4 or 8");
  }
}

}  // namespace

void ControlConfig::validate() const {
  embed_strides(downsample);
  if (embed_channels.size() != 2) throw InvalidArgument("embed_channels needs two widths");
  for (int64_t c : embed_channels)
    if (c < 1) throw InvalidArgument("embedding widths must be positive");
}

nlohmann::json to_json(const ControlConfig& c) {
  return {{"downsample", c.downsample}, {"embed_channels", c.embed_channels}};
}

ControlConfig control_config_from_json(const nlohmann::json& j, ControlConfig c) {
  if (j.contains("downsample")) c.downsample = j.at("downsample").get<int64_t>();
  if (j.contains("embed_channels")) c.embed_channels = j.at("embed_channels").get<std::vector<int64_t>>();
  c.validate();
  return c;
}

ad::ParameterSet ControlModel::merged() const {
  ad::ParameterSet p;
  p.merge(base.denoiser.params);
  p.set_trainable("", false);
  p.merge(adapter);
  return p;
}

ControlModel init_adapter(const diffusion::JointModel& base, const ControlConfig& cfg, uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  ControlModel m{base, cfg, {}};
  for (const auto& [name, p] : base.denoiser.params)
    for (const char* blk : kEncoderBlocks)
      if (name.starts_with(blk)) m.adapter.add("ctl." + name, p.value, true);
  const int64_t w = base.denoiser.config.width;
  nn::add_conv(m.adapter, "ctl.cond0", 3, cfg.embed_channels[0], 3, rng);
  nn::add_conv(m.adapter, "ctl.cond1", cfg.embed_channels[0], cfg.embed_channels[1], 3, rng);
  nn::add_conv(m.adapter, "ctl.cond2", cfg.embed_channels[1], w, 3, rng);
  nn::add_conv(m.adapter, "ctl.cond_out", w, w, 3, rng, 0.0);
  nn::add_conv(m.adapter, "ctl.zero0", w, w, 1, rng, 0.0);
  nn::add_conv(m.adapter, "ctl.zero1", 2 * w, 2 * w, 1, rng, 0.0);
  nn::add_conv(m.adapter, "ctl.zero_mid", 2 * w, 2 * w, 1, rng, 0.0);
  return m;
}

FTensor condition_tensor(const raster::Texture& c) {
  if (c.width < 1 || c.height < 1) throw InvalidArgument("empty condition raster");
  FTensor t({3, c.height, c.width});
  const size_t n = c.pixel_count();
  for (size_t i = 0; i < n; ++i)
    for (size_t ch = 0; ch < 3; ++ch) t.data()[ch * n + i] = static_cast<float>(c.rgb[i * 3 + ch]) / 255.0f;
  return t;
}

namespace graph {

FVar condition_embedding(FBinder& b, const ControlConfig& cfg, const FVar& cond) {
  const auto s = embed_strides(cfg.downsample);
  FVar h = ad::silu(nn::conv(b, "ctl.cond0", cond, s[0]));
  h = ad::silu(nn::conv(b, "ctl.cond1", h, s[1]));
  h = ad::silu(nn::conv(b, "ctl.cond2", h, s[2]));
  return nn::conv(b, "ctl.cond_out", h);
}

FVar forward(FBinder& b, const DenoiserConfig& dc, const ControlConfig& cc, const FVar& z, const std::vector<int>& t,
             const FVar& cond) {
  const auto& zs = z.shape();
  const auto& cs = cond.shape();
  if (zs.size() != 4 || zs[1] != dc.in_channels) throw InvalidArgument("adapter expects fused latents [N, 2c, h, w]");
  if (cs.size() != 4 || cs[0] != zs[0] || cs[1] != 3 || cs[2] != zs[2] * cc.downsample || cs[3] != zs[3] * cc.downsample)
    throw InvalidArgument("condition raster must be [N, 3, h*f, w*f] for latents [N, c, h, w]");
  const FVar emb = diffusion::graph::embedding(b, dc, t, zs[0]);
  const diffusion::EncoderFeatures base = diffusion::graph::encoder(b, "", z, emb);
  const diffusion::EncoderFeatures ctl =
      diffusion::graph::encoder(b, "ctl.", z, emb, condition_embedding(b, cc, cond));
  diffusion::Residuals r;
  r.skip0 = nn::conv(b, "ctl.zero0", ctl.skip0);
  r.skip1 = nn::conv(b, "ctl.zero1", ctl.skip1);
  r.mid = nn::conv(b, "ctl.zero_mid", ctl.mid);
  return diffusion::graph::decoder(b, base, r);
}

}  // namespace graph

FTensor predict_eps(const ControlModel& m, const FTensor& z, const std::vector<int>& t, const FTensor& cond) {
  const ad::ParameterSet params = m.merged();
  ad::Tape<float> tape(false);
  FBinder b(tape, params);
  return graph::forward(b, m.base.denoiser.config, m.config, tape.constant(z), t, tape.constant(cond)).value();
}

FVar control_loss(FBinder& b, const ControlModel& m, const FTensor& zh, const FTensor& zx, const FTensor& cond,
                  const diffusion::NoiseSchedule& s, Rng& rng) {
  const FVar c = b.tape().constant(cond);
  return diffusion::joint_loss(
      b,
      [&](FBinder& bb, const FVar& zt, const std::vector<int>& t) {
        return graph::forward(bb, m.base.denoiser.config, m.config, zt, t, c);
      },
      zh, zx, s, rng);
}

nlohmann::json to_json(const ControlTrainConfig& c) {
  return {{"seed", c.seed},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"lr", c.adam.lr},
          {"condition_dropout", c.condition_dropout},
          {"checkpoint_every", c.checkpoint_every}};
}

ckpt::Checkpoint control_to_checkpoint(const ControlModel& m, const std::optional<ad::OptimizerState<float>>& opt,
                                       nlohmann::json metadata) {
  ckpt::Checkpoint ck;
  ck.kind = "control";
  ck.config = {{"control", to_json(m.config)},
               {"denoiser", to_json(m.base.denoiser.config)},
               {"base_params_hash", ckpt::params_hash(m.base.denoiser.params)}};
  ck.metadata = std::move(metadata);
  ck.params = m.adapter;
  ck.optimizer = opt;
  return ck;
}

ControlModel control_from_checkpoint(const ckpt::Checkpoint& ck, const diffusion::JointModel& base) {
  if (ck.kind != "control") throw InvalidArgument("checkpoint kind '" + ck.kind + "' is not a control adapter");
  if (ck.config.at("base_params_hash").get<std::string>() != ckpt::params_hash(base.denoiser.params))
    throw InvalidArgument("control adapter was trained against a different base model");
  ControlModel m{base, control_config_from_json(ck.config.at("control")), ck.params};
  const ControlModel ref = init_adapter(base, m.config, 0);
  for (const auto& [name, p] : ref.adapter)
    if (!m.adapter.contains(name) || m.adapter.at(name).value.shape() != p.value.shape())
      throw FormatError("control checkpoint is missing or misshapes parameter " + name);
  return m;
}

ckpt::Checkpoint train_control(const std::vector<FTensor>& zh, const std::vector<FTensor>& zx,
                               const std::vector<FTensor>& conds, const ControlModel& init,
                               const ControlTrainConfig& tc, const std::optional<ckpt::Checkpoint>& resume,
                               const std::function<void(int, double)>& on_epoch) {
  if (conds.empty() && !zh.empty()) throw InvalidArgument("train_control: the dataset has no condition rasters");
  if (zh.empty() || zh.size() != zx.size() || zh.size() != conds.size())
    throw InvalidArgument("train_control needs one condition raster per latent pair");
  if (tc.batch_size < 1 || tc.epochs < 0) throw InvalidArgument("train_control: invalid batch size or epoch count");
  if (!(tc.condition_dropout >= 0.0 && tc.condition_dropout <= 1.0))
    throw InvalidArgument("condition dropout must lie in [0, 1]");

  ControlModel model = init;
  ad::OptimizerState<float> state;
  int start = 0;
  if (resume) {
    model = control_from_checkpoint(*resume, init.base);
    if (resume->optimizer) state = *resume->optimizer;
    start = resume->metadata.value("epoch", 0);
  }
  const auto& sc = model.base.schedule;
  const diffusion::NoiseSchedule sched = diffusion::make_schedule(sc.T, sc.beta_start, sc.beta_end);
  const auto& st = model.base.stats;
  std::vector<FTensor> sh, sx;
  for (size_t i = 0; i < zh.size(); ++i) {
    sh.push_back(diffusion::standardise(zh[i], st.h_mean, st.h_std));
    sx.push_back(diffusion::standardise(zx[i], st.x_mean, st.x_std));
  }
  auto metadata = [&](int epoch) {
    return nlohmann::json{{"epoch", epoch}, {"seed", tc.seed}, {"train", to_json(tc)}, {"samples", zh.size()}};
  };

  ad::ParameterSet params = model.merged();
  for (int epoch = start; epoch < tc.epochs; ++epoch) {
    Rng rng = Rng::substream(tc.seed, "training", static_cast<uint64_t>(epoch));
    Rng drop = Rng::substream(tc.seed, "dropout", static_cast<uint64_t>(epoch));
    const auto order = ad::permutation(sh.size(), rng);
    double sum = 0;
    int batches = 0;
    for (size_t s = 0; s < order.size(); s += static_cast<size_t>(tc.batch_size)) {
      std::vector<const FTensor*> bh, bx;
      std::vector<FTensor> bc;
      for (size_t i = s; i < std::min(order.size(), s + tc.batch_size); ++i) {
        bh.push_back(&sh[order[i]]);
        bx.push_back(&sx[order[i]]);
        bc.push_back(drop.uniform() < tc.condition_dropout ? FTensor(conds[order[i]].shape()) : conds[order[i]]);
      }
      ad::Tape<float> tape;
      FBinder b(tape, params);
      const FVar loss = control_loss(b, model, ad::stack(bh), ad::stack(bx), ad::stack(bc), sched, rng);
      sum += loss.value().item();
      ++batches;
      ad::adamw_step(params, ad::backward(b, loss), state, tc.adam);
    }
    model.adapter = params.extract("ctl.");
    ad::ParameterSet prefixed;
    prefixed.merge(model.adapter, "ctl.");
    model.adapter = std::move(prefixed);
    if (on_epoch) on_epoch(epoch + 1, sum / batches);
    if (tc.checkpoint_every > 0 && (epoch + 1) % tc.checkpoint_every == 0 && !tc.checkpoint_dir.empty())
      ckpt::save(tc.checkpoint_dir / ("control_epoch" + std::to_string(epoch + 1) + ".tfck"),
                 control_to_checkpoint(model, state, metadata(epoch + 1)));
  }
  return control_to_checkpoint(model, state, metadata(std::max(start, tc.epochs)));
}

diffusion::EpsFn eps_fn(const ControlModel& m, const FTensor& cond) {
  if (cond.rank() != 3 || cond.dim(0) != 3) throw InvalidArgument("condition must be [3, H, W]");
  return [params = m.merged(), dc = m.base.denoiser.config, cc = m.config, cond](const FTensor& z, int t) {
    std::vector<const FTensor*> cs(static_cast<size_t>(z.dim(0)), &cond);
    ad::Tape<float> tape(false);
    FBinder b(tape, params);
    return graph::forward(b, dc, cc, tape.constant(z), std::vector<int>(cs.size(), t), tape.constant(ad::stack(cs)))
        .value();
  };
}

}  // namespace terra::control
