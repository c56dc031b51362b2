#include "terra/diffusion/denoiser.hpp"

#include <cmath>

namespace terra::diffusion {

namespace nn = ad::nn;

void DenoiserConfig::validate() const {
  if (in_channels < 1 || out_channels < 1) throw InvalidArgument("denoiser channel counts must be positive");
  if (time_dim < 2 || time_dim % 2 != 0) throw InvalidArgument("time_dim must be even");
  for (int64_t c : {width, 2 * width, 3 * width, 4 * width}) nn::group_count(c);
}

nlohmann::json to_json(const DenoiserConfig& c) {
  return {{"in_channels", c.in_channels}, {"out_channels", c.out_channels}, {"width", c.width}, {"time_dim", c.time_dim}};
}

DenoiserConfig denoiser_config_from_json(const nlohmann::json& j, DenoiserConfig c) {
  if (j.contains("in_channels")) c.in_channels = j.at("in_channels").get<int64_t>();
  if (j.contains("out_channels")) c.out_channels = j.at("out_channels").get<int64_t>();
  if (j.contains("width")) c.width = j.at("width").get<int64_t>();
  if (j.contains("time_dim")) c.time_dim = j.at("time_dim").get<int64_t>();
  c.validate();
  return c;
}

DenoiserModel init_denoiser(const DenoiserConfig& cfg, uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  DenoiserModel m{cfg, {}};
  auto& p = m.params;
  const int64_t w = cfg.width, e = cfg.emb_dim();
  nn::add_linear(p, "time.fc1", cfg.time_dim, e, rng);
  nn::add_linear(p, "time.fc2", e, e, rng);
  p.add("context.vector", FTensor({1, e}));
  nn::add_conv(p, "conv_in", cfg.in_channels, w, 3, rng);
  nn::add_res_block(p, "rb0", w, w, e, rng);
  nn::add_conv(p, "down", w, w, 3, rng);
  nn::add_res_block(p, "rb1", w, 2 * w, e, rng);
  nn::add_res_block(p, "mid", 2 * w, 2 * w, e, rng);
  nn::add_res_block(p, "up1", 4 * w, 2 * w, e, rng);
  nn::add_res_block(p, "up0", 3 * w, w, e, rng);
  nn::add_group_norm(p, "norm_out", w);
  nn::add_conv(p, "conv_out", w, cfg.out_channels, 3, rng);
  return m;
}

const FTensor& constant_context(const DenoiserModel& m) { return m.params.at("context.vector").value; }

FTensor timestep_features(const std::vector<int>& t, int64_t dim) {
  const int64_t half = dim / 2;
  FTensor out({static_cast<int64_t>(t.size()), dim});
  for (size_t n = 0; n < t.size(); ++n)
    for (int64_t i = 0; i < half; ++i) {
      const double f = std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
      out.data()[n * dim + i] = static_cast<float>(std::sin(t[n] * f));
      out.data()[n * dim + half + i] = static_cast<float>(std::cos(t[n] * f));
    }
  return out;
}

namespace graph {

FVar embedding(FBinder& b, const DenoiserConfig& cfg, const std::vector<int>& t, int64_t batch) {
  if (static_cast<int64_t>(t.size()) != batch) throw InvalidArgument("one timestep per batch item is required");
  auto& tape = b.tape();
  FVar e = nn::linear(b, "time.fc2", ad::silu(nn::linear(b, "time.fc1", tape.constant(timestep_features(t, cfg.time_dim)))));
  const FVar ones = tape.constant(FTensor({batch, 1}, 1.0f));
  e = ad::add(e, ad::matmul(ones, b("context.vector")));
  return ad::silu(e);
}

EncoderFeatures encoder(FBinder& b, const std::string& pre, const FVar& x, const FVar& emb,
                        const std::optional<FVar>& stem) {
  FVar h = nn::conv(b, pre + "conv_in", x);
  if (stem) h = ad::add(h, *stem);
  EncoderFeatures f;
  f.emb = emb;
  f.skip0 = nn::res_block(b, pre + "rb0", h, emb);
  h = nn::conv(b, pre + "down", f.skip0, 2);
  f.skip1 = nn::res_block(b, pre + "rb1", h, emb);
  f.mid = nn::res_block(b, pre + "mid", f.skip1, emb);
  return f;
}

FVar decoder(FBinder& b, const EncoderFeatures& f, const Residuals& r) {
  const FVar skip0 = r.skip0 ? ad::add(f.skip0, *r.skip0) : f.skip0;
  const FVar skip1 = r.skip1 ? ad::add(f.skip1, *r.skip1) : f.skip1;
  const FVar mid = r.mid ? ad::add(f.mid, *r.mid) : f.mid;
  FVar h = nn::res_block(b, "up1", ad::concat_channels<float>({mid, skip1}), f.emb);
  h = ad::upsample_nearest2x(h);
  h = nn::res_block(b, "up0", ad::concat_channels<float>({h, skip0}), f.emb);
  return nn::conv(b, "conv_out", nn::norm_silu(b, "norm_out", h));
}

FVar forward(FBinder& b, const DenoiserConfig& cfg, const FVar& z, const std::vector<int>& t) {
  if (z.shape().size() != 4 || z.shape()[1] != cfg.in_channels)
    throw InvalidArgument("denoiser expects [N, " + std::to_string(cfg.in_channels) + ", h, w]");
  if (z.shape()[2] % 2 != 0 || z.shape()[3] % 2 != 0) throw InvalidArgument("denoiser needs even latent extents");
  const FVar emb = embedding(b, cfg, t, z.shape()[0]);
  return decoder(b, encoder(b, "", z, emb));
}

}  // namespace graph

FTensor predict_eps(const DenoiserModel& m, const FTensor& z, const std::vector<int>& t) {
  ad::Tape<float> tape(false);
  FBinder b(tape, m.params);
  return graph::forward(b, m.config, tape.constant(z), t).value();
}

DenoiserModel extend_channels(const DenoiserModel& m, int64_t old_in, int64_t old_out, int64_t new_in,
                              int64_t new_out, double init_scale, Rng& rng, bool prepend) {
  if (new_in < old_in || new_out < old_out) throw InvalidArgument("extend_channels cannot shrink a model");
  if (!(init_scale >= 0.0)) throw InvalidArgument("init_scale must be non-negative");
  const FTensor& win = m.params.at("conv_in.weight").value;
  const FTensor& wout = m.params.at("conv_out.weight").value;
  const FTensor& bout = m.params.at("conv_out.bias").value;
  if (m.config.in_channels != old_in || win.dim(1) != old_in || m.config.out_channels != old_out ||
      wout.dim(0) != old_out || bout.dim(0) != old_out)
    throw InvalidArgument("checkpoint layer shapes do not match the declared channel counts");

  auto draw = [&] { return static_cast<float>(init_scale == 0.0 ? 0.0 : rng.normal(0.0, init_scale)); };
  DenoiserModel out{m.config, {}};
  out.config.in_channels = new_in;
  out.config.out_channels = new_out;
  const int64_t add_in = new_in - old_in, add_out = new_out - old_out;

  // conv_in: [width, in, k, k]; new input slices per output filter.
  const int64_t co = win.dim(0), kk = win.dim(2) * win.dim(3);
  FTensor nin({co, new_in, win.dim(2), win.dim(3)});
  for (int64_t o = 0; o < co; ++o)
    for (int64_t c = 0; c < new_in; ++c) {
      const int64_t src = prepend ? c - add_in : c;
      for (int64_t k = 0; k < kk; ++k)
        nin.data()[(o * new_in + c) * kk + k] =
            (src >= 0 && src < old_in) ? win.data()[(o * old_in + src) * kk + k] : draw();
    }

  // conv_out: [out, width, k, k]; new rows.
  const int64_t row = wout.numel() / old_out;
  FTensor nout({new_out, wout.dim(1), wout.dim(2), wout.dim(3)});
  FTensor nbias({new_out});
  for (int64_t o = 0; o < new_out; ++o) {
    const int64_t src = prepend ? o - add_out : o;
    const bool old = src >= 0 && src < old_out;
    for (int64_t i = 0; i < row; ++i) nout.data()[o * row + i] = old ? wout.data()[src * row + i] : draw();
    nbias.data()[o] = old ? bout.data()[src] : 0.0f;
  }

  for (const auto& [name, p] : m.params) {
    if (name == "conv_in.weight") out.params.add(name, nin, p.trainable);
    else if (name == "conv_out.weight") out.params.add(name, nout, p.trainable);
    else if (name == "conv_out.bias") out.params.add(name, nbias, p.trainable);
    else out.params.add(name, p.value, p.trainable);
  }
  return out;
}

}  // namespace terra::diffusion
