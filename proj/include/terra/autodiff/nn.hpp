#pragma once

#include <optional>
#include <string>

#include "terra/autodiff/ops.hpp"
#include "terra/autodiff/params.hpp"
#include "terra/core/rng.hpp"

// Layer building blocks over ParameterSet. Parameters of a layer `name` live
// under "<name>.weight", "<name>.bias", etc.
namespace terra::ad::nn {

using FVar = Var<float>;
using FBinder = Binder<float>;

/// Group count used by every normalization layer: min(8, channels).
int group_count(int64_t channels);

/// He-style normal init scaled by `gain`; gain 0 gives an all-zero kernel.
void add_conv(ParameterSet& p, const std::string& name, int64_t cin, int64_t cout, int64_t kernel, Rng& rng,
              double gain = 1.0);
void add_linear(ParameterSet& p, const std::string& name, int64_t in, int64_t out, Rng& rng, double gain = 1.0);
void add_group_norm(ParameterSet& p, const std::string& name, int64_t channels);

/// "Same" padding for odd kernels.
FVar conv(FBinder& b, const std::string& name, const FVar& x, int stride = 1);
FVar linear(FBinder& b, const std::string& name, const FVar& x);
FVar norm(FBinder& b, const std::string& name, const FVar& x);
inline FVar norm_silu(FBinder& b, const std::string& name, const FVar& x) { return silu(norm(b, name, x)); }

/// Pre-activation residual block:
///   h = conv1(silu(norm1(x))) [+ proj(emb)];  h = conv2(silu(norm2(h)));  out = skip(x) + h
/// with a 1x1 skip projection when channel counts differ. conv2 starts at zero.
void add_res_block(ParameterSet& p, const std::string& name, int64_t cin, int64_t cout, int64_t emb_dim, Rng& rng);
FVar res_block(FBinder& b, const std::string& name, const FVar& x, const std::optional<FVar>& emb);

}  // namespace terra::ad::nn
