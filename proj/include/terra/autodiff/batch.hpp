#pragma once

#include <span>
#include <vector>

#include "terra/autodiff/tensor.hpp"
#include "terra/core/rng.hpp"

namespace terra::ad {

/// Stacks equally shaped [C, H, W] tensors into [N, C, H, W].
inline Tensor<float> stack(std::span<const Tensor<float>* const> items) {
  if (items.empty()) throw InvalidArgument("stack: empty batch");
  Shape s{static_cast<int64_t>(items.size())};
  for (int64_t d : items[0]->shape()) s.push_back(d);
  Tensor<float> out(s);
  const size_t per = static_cast<size_t>(items[0]->numel());
  for (size_t i = 0; i < items.size(); ++i) {
    if (items[i]->shape() != items[0]->shape()) throw InvalidArgument("stack: shape mismatch");
    std::copy(items[i]->data().begin(), items[i]->data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(i * per));
  }
  return out;
}

inline Tensor<float> stack(const std::vector<const Tensor<float>*>& items) {
  return stack(std::span<const Tensor<float>* const>(items));
}
inline Tensor<float> stack(const std::vector<Tensor<float>>& items) {
  std::vector<const Tensor<float>*> ptrs;
  for (const auto& t : items) ptrs.push_back(&t);
  return stack(std::span<const Tensor<float>* const>(ptrs));
}

/// Item i of a batch [N, ...] as a tensor of the remaining shape.
inline Tensor<float> unstack(const Tensor<float>& batch, int64_t i) {
  Shape s(batch.shape().begin() + 1, batch.shape().end());
  const int64_t per = shape_numel(s);
  auto d = batch.data();
  return Tensor<float>(s, std::vector<float>(d.begin() + i * per, d.begin() + (i + 1) * per));
}

/// Crop [C, H, W] to [C, size, size] at (x0, y0).
inline Tensor<float> crop(const Tensor<float>& img, int64_t x0, int64_t y0, int64_t size) {
  const int64_t c = img.dim(0), h = img.dim(1), w = img.dim(2);
  if (x0 < 0 || y0 < 0 || x0 + size > w || y0 + size > h) throw InvalidArgument("crop outside image");
  Tensor<float> out({c, size, size});
  for (int64_t ch = 0; ch < c; ++ch)
    for (int64_t y = 0; y < size; ++y)
      for (int64_t x = 0; x < size; ++x)
        out.data()[(ch * size + y) * size + x] = img.data()[(ch * h + y0 + y) * w + x0 + x];
  return out;
}

/// Tensor of i.i.d. standard normals.
inline Tensor<float> randn(const Shape& s, Rng& rng) {
  Tensor<float> t(s);
  for (float& v : t.data()) v = static_cast<float>(rng.normal());
  return t;
}

/// Fisher-Yates permutation of [0, n).
inline std::vector<size_t> permutation(size_t n, Rng& rng) {
  std::vector<size_t> p(n);
  for (size_t i = 0; i < n; ++i) p[i] = i;
  for (size_t i = n; i > 1; --i) std::swap(p[i - 1], p[rng.below(i)]);
  return p;
}

}  // namespace terra::ad
