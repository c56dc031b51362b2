#include "terra/autodiff/nn.hpp"

#include <cmath>

namespace terra::ad::nn {

int group_count(int64_t channels) {
  const int64_t g = std::min<int64_t>(8, channels);
  if (channels % g != 0) {
    throw InvalidArgument("channel count " + std::to_string(channels) + " is not divisible by min(8, channels)");
  }
  return static_cast<int>(g);
}

void add_conv(ParameterSet& p, const std::string& name, int64_t cin, int64_t cout, int64_t kernel, Rng& rng,
              double gain) {
  Tensor<float> w({cout, cin, kernel, kernel});
  const double stddev = gain * std::sqrt(1.0 / static_cast<double>(cin * kernel * kernel));
  if (gain != 0.0)
    for (float& v : w.data()) v = static_cast<float>(rng.normal() * stddev);
  p.add(name + ".weight", std::move(w));
  p.add(name + ".bias", Tensor<float>({cout}));
}

void add_linear(ParameterSet& p, const std::string& name, int64_t in, int64_t out, Rng& rng, double gain) {
  Tensor<float> w({out, in});
  const double stddev = gain * std::sqrt(1.0 / static_cast<double>(in));
  if (gain != 0.0)
    for (float& v : w.data()) v = static_cast<float>(rng.normal() * stddev);
  p.add(name + ".weight", std::move(w));
  p.add(name + ".bias", Tensor<float>({out}));
}

void add_group_norm(ParameterSet& p, const std::string& name, int64_t channels) {
  group_count(channels);
  p.add(name + ".gamma", Tensor<float>({channels}, 1.0f));
  p.add(name + ".beta", Tensor<float>({channels}));
}

FVar conv(FBinder& b, const std::string& name, const FVar& x, int stride) {
  FVar w = b(name + ".weight");
  const int pad = static_cast<int>(w.shape()[2] / 2);
  return conv2d(x, w, std::optional<FVar>(b(name + ".bias")), Conv2dAttrs{stride, pad});
}

FVar linear(FBinder& b, const std::string& name, const FVar& x) {
  return ad::linear(x, b(name + ".weight"), std::optional<FVar>(b(name + ".bias")));
}

FVar norm(FBinder& b, const std::string& name, const FVar& x) {
  return group_norm(x, b(name + ".gamma"), b(name + ".beta"), group_count(x.shape()[1]));
}

void add_res_block(ParameterSet& p, const std::string& name, int64_t cin, int64_t cout, int64_t emb_dim, Rng& rng) {
  add_group_norm(p, name + ".norm1", cin);
  add_conv(p, name + ".conv1", cin, cout, 3, rng);
  if (emb_dim > 0) add_linear(p, name + ".emb", emb_dim, cout, rng);
  add_group_norm(p, name + ".norm2", cout);
  add_conv(p, name + ".conv2", cout, cout, 3, rng, 0.0);
  if (cin != cout) add_conv(p, name + ".skip", cin, cout, 1, rng);
}

FVar res_block(FBinder& b, const std::string& name, const FVar& x, const std::optional<FVar>& emb) {
  FVar h = conv(b, name + ".conv1", norm_silu(b, name + ".norm1", x));
  if (emb && b.params().contains(name + ".emb.weight")) h = add_channel(h, linear(b, name + ".emb", *emb));
  h = conv(b, name + ".conv2", norm_silu(b, name + ".norm2", h));
  FVar skip = b.params().contains(name + ".skip.weight") ? conv(b, name + ".skip", x) : x;
  return add(skip, h);
}

}  // namespace terra::ad::nn
