#pragma once

#include <optional>
#include <type_traits>
#include <string_view>
#include <vector>

#include "terra/autodiff/tape.hpp"

namespace terra::ad {

// Element-wise, same-shape.
template <typename T> Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> mul(const Var<T>& a, const Var<T>& b);

/// x[N,C,H,W] + e[N,C] broadcast over the spatial extent.
template <typename T> Var<T> add_channel(const Var<T>& x, const Var<T>& e);

/// y = scale * x + shift.
template <typename T> Var<T> scalar_affine(const Var<T>& x, T scale, T shift = T{0});

template <typename T> Var<T> silu(const Var<T>& x);
template <typename T> Var<T> exp(const Var<T>& x);

/// a[M,K] x b[K,N].
template <typename T> Var<T> matmul(const Var<T>& a, const Var<T>& b);

/// x[N,in] -> x * w^T + b, with w[out,in], b[out].
template <typename T> Var<T> linear(const Var<T>& x, const Var<T>& w, const std::type_identity_t<std::optional<Var<T>>>& b);

struct Conv2dAttrs {
  int stride = 1;
  int padding = 0;
};

/// x[N,Ci,H,W], w[Co,Ci,kh,kw], optional b[Co]; zero padding.
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const std::type_identity_t<std::optional<Var<T>>>& b, Conv2dAttrs attrs);

template <typename T> Var<T> upsample_nearest2x(const Var<T>& x);
/// Keeps pixel (2i, 2j); output extent ceil(H/2) x ceil(W/2).
template <typename T> Var<T> downsample_stride2x(const Var<T>& x);

/// Normalizes each of `groups` channel groups of x[N,C,H,W] to zero mean and
/// unit variance, then applies per-channel gamma/beta.
template <typename T>
Var<T> group_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, int groups, double eps = 1e-5);

/// Scalar mean of x^2.
template <typename T> Var<T> mean_square(const Var<T>& x);
template <typename T> Var<T> mean(const Var<T>& x);
template <typename T> Var<T> sum(const Var<T>& x);

template <typename T> Var<T> concat_channels(const std::vector<Var<T>>& parts);
template <typename T> std::vector<Var<T>> split_channels(const Var<T>& x, const std::vector<int64_t>& sizes);

/// Tagged dispatch over every differentiable op, used by the gradient checker
/// and anywhere an op is chosen at runtime.
enum class OpKind {
  kAdd,
  kSub,
  kMul,
  kAddChannel,
  kScalarAffine,
  kSilu,
  kExp,
  kMatmul,
  kLinear,
  kConv2d,
  kUpsampleNearest2x,
  kDownsampleStride2x,
  kGroupNorm,
  kMeanSquare,
  kMean,
  kSum,
  kConcatChannels,
  kSplitChannels,
};

struct OpAttrs {
  Conv2dAttrs conv;
  int groups = 1;
  double eps = 1e-5;
  double scale = 1.0;
  double shift = 0.0;
  std::vector<int64_t> split_sizes;
  int split_index = 0;  // which split output forward_op returns
};

OpKind op_kind_from_string(std::string_view name);
std::string_view to_string(OpKind kind);
const std::vector<OpKind>& all_op_kinds();

template <typename T>
Var<T> forward_op(OpKind kind, const std::vector<Var<T>>& inputs, const OpAttrs& attrs = {});

}  // namespace terra::ad
