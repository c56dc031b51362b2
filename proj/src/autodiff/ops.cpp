#include "terra/autodiff/ops.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "gemm.hpp"

namespace terra::ad {
namespace {

template <typename T>
void require_same_shape(const Var<T>& a, const Var<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw InvalidArgument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                          shape_str(b.shape()));
  }
}

void require_rank(const Shape& s, int rank, const char* op) {
  if (static_cast<int>(s.size()) != rank) {
    throw InvalidArgument(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                          shape_str(s));
  }
}

template <typename T>
void accumulate(Tensor<T>& dst, const Tensor<T>& src) {
  auto d = dst.data();
  auto s = src.data();
  for (size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

template <typename T>
T sigmoid(T x) {
  return T{1} / (T{1} + std::exp(-x));
}

struct ConvGeometry {
  int64_t n, ci, h, w, co, kh, kw, ho, wo, stride, pad;
  int64_t k() const { return ci * kh * kw; }
  int64_t p() const { return ho * wo; }
  bool pointwise() const { return kh == 1 && kw == 1 && stride == 1 && pad == 0; }
};

template <typename T>
void im2col(const ConvGeometry& g, const T* x, T* cols) {
  for (int64_t c = 0; c < g.ci; ++c)
    for (int64_t ky = 0; ky < g.kh; ++ky)
      for (int64_t kx = 0; kx < g.kw; ++kx) {
        T* row = cols + ((c * g.kh + ky) * g.kw + kx) * g.p();
        const T* plane = x + c * g.h * g.w;
        for (int64_t oy = 0; oy < g.ho; ++oy) {
          const int64_t iy = oy * g.stride - g.pad + ky;
          T* out = row + oy * g.wo;
          if (iy < 0 || iy >= g.h) {
            std::fill(out, out + g.wo, T{0});
            continue;
          }
          for (int64_t ox = 0; ox < g.wo; ++ox) {
            const int64_t ix = ox * g.stride - g.pad + kx;
            out[ox] = (ix < 0 || ix >= g.w) ? T{0} : plane[iy * g.w + ix];
          }
        }
      }
}

template <typename T>
void col2im_acc(const ConvGeometry& g, const T* cols, T* dx) {
  for (int64_t c = 0; c < g.ci; ++c)
    for (int64_t ky = 0; ky < g.kh; ++ky)
      for (int64_t kx = 0; kx < g.kw; ++kx) {
        const T* row = cols + ((c * g.kh + ky) * g.kw + kx) * g.p();
        T* plane = dx + c * g.h * g.w;
        for (int64_t oy = 0; oy < g.ho; ++oy) {
          const int64_t iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.h) continue;
          for (int64_t ox = 0; ox < g.wo; ++ox) {
            const int64_t ix = ox * g.stride - g.pad + kx;
            if (ix >= 0 && ix < g.w) plane[iy * g.w + ix] += row[oy * g.wo + ox];
          }
        }
      }
}

}  // namespace

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a, b, "add");
  Tensor<T> out(a.shape());
  auto o = out.data();
  auto x = a.value().data();
  auto y = b.value().data();
  for (size_t i = 0; i < o.size(); ++i) o[i] = x[i] + y[i];
  const int ia = a.id(), ib = b.id();
  return a.tape()->record("add", std::move(out), {a, b}, [ia, ib](Tape<T>& t, const Tensor<T>& g) {
    if (t.requires_grad(ia)) accumulate(t.grad_buffer(ia), g);
    if (t.requires_grad(ib)) accumulate(t.grad_buffer(ib), g);
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a, b, "sub");
  Tensor<T> out(a.shape());
  auto o = out.data();
  auto x = a.value().data();
  auto y = b.value().data();
  for (size_t i = 0; i < o.size(); ++i) o[i] = x[i] - y[i];
  const int ia = a.id(), ib = b.id();
  return a.tape()->record("sub", std::move(out), {a, b}, [ia, ib](Tape<T>& t, const Tensor<T>& g) {
    if (t.requires_grad(ia)) accumulate(t.grad_buffer(ia), g);
    if (t.requires_grad(ib)) {
      auto d = t.grad_buffer(ib).data();
      auto s = g.data();
      for (size_t i = 0; i < d.size(); ++i) d[i] -= s[i];
    }
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a, b, "mul");
  Tensor<T> out(a.shape());
  auto o = out.data();
  auto x = a.value().data();
  auto y = b.value().data();
  for (size_t i = 0; i < o.size(); ++i) o[i] = x[i] * y[i];
  const int ia = a.id(), ib = b.id();
  return a.tape()->record("mul", std::move(out), {a, b}, [ia, ib](Tape<T>& t, const Tensor<T>& g) {
    auto s = g.data();
    if (t.requires_grad(ia)) {
      auto d = t.grad_buffer(ia).data();
      auto y = t.value(ib).data();
      for (size_t i = 0; i < d.size(); ++i) d[i] += s[i] * y[i];
    }
    if (t.requires_grad(ib)) {
      auto d = t.grad_buffer(ib).data();
      auto x = t.value(ia).data();
      for (size_t i = 0; i < d.size(); ++i) d[i] += s[i] * x[i];
    }
  });
}

template <typename T>
Var<T> add_channel(const Var<T>& x, const Var<T>& e) {
  require_rank(x.shape(), 4, "add_channel");
  require_rank(e.shape(), 2, "add_channel");
  const int64_t n = x.shape()[0], c = x.shape()[1], hw = x.shape()[2] * x.shape()[3];
  if (e.shape()[0] != n || e.shape()[1] != c) {
    throw InvalidArgument("add_channel: embedding " + shape_str(e.shape()) + " does not match " +
                          shape_str(x.shape()));
  }
  Tensor<T> out = x.value();
  auto o = out.data();
  auto ev = e.value().data();
  for (int64_t i = 0; i < n * c; ++i)
    for (int64_t p = 0; p < hw; ++p) o[i * hw + p] += ev[i];
  const int ix = x.id(), ie = e.id();
  return x.tape()->record("add_channel", std::move(out), {x, e},
                          [ix, ie, n, c, hw](Tape<T>& t, const Tensor<T>& g) {
                            if (t.requires_grad(ix)) accumulate(t.grad_buffer(ix), g);
                            if (t.requires_grad(ie)) {
                              auto d = t.grad_buffer(ie).data();
                              auto s = g.data();
                              for (int64_t i = 0; i < n * c; ++i) {
                                T acc{0};
                                for (int64_t p = 0; p < hw; ++p) acc += s[i * hw + p];
                                d[i] += acc;
                              }
                            }
                          });
}

template <typename T>
Var<T> scalar_affine(const Var<T>& x, T scale, T shift) {
  Tensor<T> out(x.shape());
  auto o = out.data();
  auto v = x.value().data();
  for (size_t i = 0; i < o.size(); ++i) o[i] = scale * v[i] + shift;
  const int ix = x.id();
  return x.tape()->record("scalar_affine", std::move(out), {x}, [ix, scale](Tape<T>& t, const Tensor<T>& g) {
    auto d = t.grad_buffer(ix).data();
    auto s = g.data();
    for (size_t i = 0; i < d.size(); ++i) d[i] += scale * s[i];
  });
}

template <typename T>
Var<T> silu(const Var<T>& x) {
  Tensor<T> out(x.shape());
  auto o = out.data();
  auto v = x.value().data();
  for (size_t i = 0; i < o.size(); ++i) o[i] = v[i] * sigmoid(v[i]);
  const int ix = x.id();
  return x.tape()->record("silu", std::move(out), {x}, [ix](Tape<T>& t, const Tensor<T>& g) {
    auto d = t.grad_buffer(ix).data();
    auto v = t.value(ix).data();
    auto s = g.data();
    for (size_t i = 0; i < d.size(); ++i) {
      const T sg = sigmoid(v[i]);
      d[i] += s[i] * sg * (T{1} + v[i] * (T{1} - sg));
    }
  });
}

template <typename T>
Var<T> exp(const Var<T>& x) {
  Tensor<T> out(x.shape());
  auto o = out.data();
  auto v = x.value().data();
  for (size_t i = 0; i < o.size(); ++i) o[i] = std::exp(v[i]);
  const int ix = x.id();
  return x.tape()->record("exp", std::move(out), {x}, [ix](Tape<T>& t, const Tensor<T>& g) {
    auto d = t.grad_buffer(ix).data();
    auto v = t.value(ix).data();
    auto s = g.data();
    for (size_t i = 0; i < d.size(); ++i) d[i] += s[i] * std::exp(v[i]);
  });
}

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  require_rank(a.shape(), 2, "matmul");
  require_rank(b.shape(), 2, "matmul");
  const int64_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) {
    throw InvalidArgument("matmul: inner dimensions differ " + shape_str(a.shape()) + " x " +
                          shape_str(b.shape()));
  }
  Tensor<T> out(Shape{m, n});
  detail::gemm_acc(m, n, k, a.value().data().data(), b.value().data().data(), out.data().data());
  const int ia = a.id(), ib = b.id();
  return a.tape()->record("matmul", std::move(out), {a, b}, [ia, ib, m, k, n](Tape<T>& t, const Tensor<T>& g) {
    if (t.requires_grad(ia)) {
      // dA = G * B^T
      std::vector<T> bt(static_cast<size_t>(k * n));
      detail::transpose(k, n, t.value(ib).data().data(), bt.data());
      detail::gemm_acc(m, k, n, g.data().data(), bt.data(), t.grad_buffer(ia).data().data());
    }
    if (t.requires_grad(ib)) {
      // dB = A^T * G
      std::vector<T> at(static_cast<size_t>(m * k));
      detail::transpose(m, k, t.value(ia).data().data(), at.data());
      detail::gemm_acc(k, n, m, at.data(), g.data().data(), t.grad_buffer(ib).data().data());
    }
  });
}

template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const std::type_identity_t<std::optional<Var<T>>>& b) {
  require_rank(x.shape(), 2, "linear");
  require_rank(w.shape(), 2, "linear");
  const int64_t n = x.shape()[0], in = x.shape()[1], out_f = w.shape()[0];
  if (w.shape()[1] != in) {
    throw InvalidArgument("linear: weight " + shape_str(w.shape()) + " does not accept input " +
                          shape_str(x.shape()));
  }
  if (b && (b->shape() != Shape{out_f})) {
    throw InvalidArgument("linear: bias shape " + shape_str(b->shape()));
  }
  Tensor<T> out(Shape{n, out_f});
  if (b) {
    auto bv = b->value().data();
    for (int64_t r = 0; r < n; ++r)
      for (int64_t o = 0; o < out_f; ++o) out[r * out_f + o] = bv[o];
  }
  std::vector<T> wt(static_cast<size_t>(in * out_f));
  detail::transpose(out_f, in, w.value().data().data(), wt.data());
  detail::gemm_acc(n, out_f, in, x.value().data().data(), wt.data(), out.data().data());
  std::vector<Var<T>> parents{x, w};
  if (b) parents.push_back(*b);
  const int ix = x.id(), iw = w.id(), ib = b ? b->id() : -1;
  return x.tape()->record("linear", std::move(out), parents,
                          [ix, iw, ib, n, in, out_f](Tape<T>& t, const Tensor<T>& g) {
                            if (t.requires_grad(ix)) {
                              detail::gemm_acc(n, in, out_f, g.data().data(), t.value(iw).data().data(),
                                               t.grad_buffer(ix).data().data());
                            }
                            if (t.requires_grad(iw)) {
                              std::vector<T> gt(static_cast<size_t>(n * out_f));
                              detail::transpose(n, out_f, g.data().data(), gt.data());
                              detail::gemm_acc(out_f, in, n, gt.data(), t.value(ix).data().data(),
                                               t.grad_buffer(iw).data().data());
                            }
                            if (ib >= 0 && t.requires_grad(ib)) {
                              auto d = t.grad_buffer(ib).data();
                              for (int64_t r = 0; r < n; ++r)
                                for (int64_t o = 0; o < out_f; ++o) d[o] += g[r * out_f + o];
                            }
                          });
}

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const std::type_identity_t<std::optional<Var<T>>>& b, Conv2dAttrs attrs) {
  require_rank(x.shape(), 4, "conv2d");
  require_rank(w.shape(), 4, "conv2d");
  if (attrs.stride < 1 || attrs.padding < 0) throw InvalidArgument("conv2d: invalid stride/padding");
  ConvGeometry geo{};
  geo.n = x.shape()[0];
  geo.ci = x.shape()[1];
  geo.h = x.shape()[2];
  geo.w = x.shape()[3];
  geo.co = w.shape()[0];
  geo.kh = w.shape()[2];
  geo.kw = w.shape()[3];
  geo.stride = attrs.stride;
  geo.pad = attrs.padding;
  if (w.shape()[1] != geo.ci) {
    throw InvalidArgument("conv2d: kernel " + shape_str(w.shape()) + " expects " +
                          std::to_string(w.shape()[1]) + " input channels, got " + shape_str(x.shape()));
  }
  if (b && (b->shape() != Shape{geo.co})) throw InvalidArgument("conv2d: bias shape " + shape_str(b->shape()));
  const int64_t span_h = geo.h + 2 * geo.pad - geo.kh;
  const int64_t span_w = geo.w + 2 * geo.pad - geo.kw;
  if (span_h < 0 || span_w < 0) throw InvalidArgument("conv2d: kernel larger than padded input");
  geo.ho = span_h / geo.stride + 1;
  geo.wo = span_w / geo.stride + 1;

  Tensor<T> out(Shape{geo.n, geo.co, geo.ho, geo.wo});
  const int64_t k = geo.k(), p = geo.p();
  std::vector<T> cols(geo.pointwise() ? 0 : static_cast<size_t>(k * p));
  const T* wdata = w.value().data().data();
  for (int64_t s = 0; s < geo.n; ++s) {
    T* o = out.data().data() + s * geo.co * p;
    if (b) {
      auto bv = b->value().data();
      for (int64_t c = 0; c < geo.co; ++c) std::fill(o + c * p, o + (c + 1) * p, bv[c]);
    }
    const T* xs = x.value().data().data() + s * geo.ci * geo.h * geo.w;
    const T* src = xs;
    if (!geo.pointwise()) {
      im2col(geo, xs, cols.data());
      src = cols.data();
    }
    detail::gemm_acc(geo.co, p, k, wdata, src, o);
  }

  std::vector<Var<T>> parents{x, w};
  if (b) parents.push_back(*b);
  const int ix = x.id(), iw = w.id(), ib = b ? b->id() : -1;
  return x.tape()->record("conv2d", std::move(out), parents, [geo, ix, iw, ib](Tape<T>& t, const Tensor<T>& g) {
    const int64_t k = geo.k(), p = geo.p();
    const bool need_x = t.requires_grad(ix), need_w = t.requires_grad(iw);
    std::vector<T> cols(static_cast<size_t>(k * p));
    std::vector<T> cols_t(need_w ? static_cast<size_t>(k * p) : 0);
    std::vector<T> wt;
    if (need_x) {
      wt.resize(static_cast<size_t>(geo.co * k));
      detail::transpose(geo.co, k, t.value(iw).data().data(), wt.data());
    }
    for (int64_t s = 0; s < geo.n; ++s) {
      const T* gs = g.data().data() + s * geo.co * p;
      if (need_w) {
        const T* xs = t.value(ix).data().data() + s * geo.ci * geo.h * geo.w;
        if (geo.pointwise()) {
          std::copy(xs, xs + k * p, cols.begin());
        } else {
          im2col(geo, xs, cols.data());
        }
        detail::transpose(k, p, cols.data(), cols_t.data());
        detail::gemm_acc(geo.co, k, p, gs, cols_t.data(), t.grad_buffer(iw).data().data());
      }
      if (need_x) {
        std::fill(cols.begin(), cols.end(), T{0});
        detail::gemm_acc(k, p, geo.co, wt.data(), gs, cols.data());
        T* dx = t.grad_buffer(ix).data().data() + s * geo.ci * geo.h * geo.w;
        if (geo.pointwise()) {
          for (int64_t i = 0; i < k * p; ++i) dx[i] += cols[static_cast<size_t>(i)];
        } else {
          col2im_acc(geo, cols.data(), dx);
        }
      }
      if (ib >= 0 && t.requires_grad(ib)) {
        auto db = t.grad_buffer(ib).data();
        for (int64_t c = 0; c < geo.co; ++c) {
          T acc{0};
          for (int64_t i = 0; i < p; ++i) acc += gs[c * p + i];
          db[c] += acc;
        }
      }
    }
  });
}

template <typename T>
Var<T> upsample_nearest2x(const Var<T>& x) {
  require_rank(x.shape(), 4, "upsample_nearest2x");
  const int64_t nc = x.shape()[0] * x.shape()[1], h = x.shape()[2], w = x.shape()[3];
  Tensor<T> out(Shape{x.shape()[0], x.shape()[1], 2 * h, 2 * w});
  auto o = out.data();
  auto v = x.value().data();
  for (int64_t i = 0; i < nc; ++i)
    for (int64_t y = 0; y < 2 * h; ++y)
      for (int64_t xx = 0; xx < 2 * w; ++xx) o[(i * 2 * h + y) * 2 * w + xx] = v[(i * h + y / 2) * w + xx / 2];
  const int ix = x.id();
  return x.tape()->record("upsample_nearest2x", std::move(out), {x}, [ix, nc, h, w](Tape<T>& t, const Tensor<T>& g) {
    auto d = t.grad_buffer(ix).data();
    auto s = g.data();
    for (int64_t i = 0; i < nc; ++i)
      for (int64_t y = 0; y < 2 * h; ++y)
        for (int64_t xx = 0; xx < 2 * w; ++xx) d[(i * h + y / 2) * w + xx / 2] += s[(i * 2 * h + y) * 2 * w + xx];
  });
}

template <typename T>
Var<T> downsample_stride2x(const Var<T>& x) {
  require_rank(x.shape(), 4, "downsample_stride2x");
  const int64_t nc = x.shape()[0] * x.shape()[1], h = x.shape()[2], w = x.shape()[3];
  const int64_t ho = (h + 1) / 2, wo = (w + 1) / 2;
  Tensor<T> out(Shape{x.shape()[0], x.shape()[1], ho, wo});
  auto o = out.data();
  auto v = x.value().data();
  for (int64_t i = 0; i < nc; ++i)
    for (int64_t y = 0; y < ho; ++y)
      for (int64_t xx = 0; xx < wo; ++xx) o[(i * ho + y) * wo + xx] = v[(i * h + 2 * y) * w + 2 * xx];
  const int ix = x.id();
  return x.tape()->record("downsample_stride2x", std::move(out), {x},
                          [ix, nc, h, w, ho, wo](Tape<T>& t, const Tensor<T>& g) {
                            auto d = t.grad_buffer(ix).data();
                            auto s = g.data();
                            for (int64_t i = 0; i < nc; ++i)
                              for (int64_t y = 0; y < ho; ++y)
                                for (int64_t xx = 0; xx < wo; ++xx)
                                  d[(i * h + 2 * y) * w + 2 * xx] += s[(i * ho + y) * wo + xx];
                          });
}

template <typename T>
Var<T> group_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, int groups, double eps) {
  require_rank(x.shape(), 4, "group_norm");
  const int64_t n = x.shape()[0], c = x.shape()[1], hw = x.shape()[2] * x.shape()[3];
  if (groups < 1 || c % groups != 0) {
    throw InvalidArgument("group_norm: " + std::to_string(c) + " channels not divisible into " +
                          std::to_string(groups) + " groups");
  }
  if (gamma.shape() != Shape{c} || beta.shape() != Shape{c}) {
    throw InvalidArgument("group_norm: affine parameters must have shape [" + std::to_string(c) + "]");
  }
  const int64_t cpg = c / groups, m = cpg * hw;
  std::vector<double> means(static_cast<size_t>(n * groups)), rstds(static_cast<size_t>(n * groups));
  Tensor<T> out(x.shape());
  auto v = x.value().data();
  auto gm = gamma.value().data();
  auto bt = beta.value().data();
  auto o = out.data();
  for (int64_t s = 0; s < n; ++s)
    for (int64_t gi = 0; gi < groups; ++gi) {
      const int64_t base = (s * c + gi * cpg) * hw;
      double acc = 0;
      for (int64_t i = 0; i < m; ++i) acc += v[base + i];
      const double mu = acc / static_cast<double>(m);
      double var = 0;
      for (int64_t i = 0; i < m; ++i) {
        const double d = v[base + i] - mu;
        var += d * d;
      }
      var /= static_cast<double>(m);
      const double rstd = 1.0 / std::sqrt(var + eps);
      means[s * groups + gi] = mu;
      rstds[s * groups + gi] = rstd;
      for (int64_t cc = 0; cc < cpg; ++cc) {
        const int64_t ch = gi * cpg + cc;
        for (int64_t p = 0; p < hw; ++p) {
          const int64_t idx = base + cc * hw + p;
          o[idx] = static_cast<T>((v[idx] - mu) * rstd) * gm[ch] + bt[ch];
        }
      }
    }
  const int ix = x.id(), ig = gamma.id(), ib = beta.id();
  return x.tape()->record(
      "group_norm", std::move(out), {x, gamma, beta},
      [=, means = std::move(means), rstds = std::move(rstds)](Tape<T>& t, const Tensor<T>& g) {
        auto v = t.value(ix).data();
        auto gm = t.value(ig).data();
        const bool need_x = t.requires_grad(ix), need_g = t.requires_grad(ig), need_b = t.requires_grad(ib);
        for (int64_t s = 0; s < n; ++s)
          for (int64_t gi = 0; gi < groups; ++gi) {
            const int64_t base = (s * c + gi * cpg) * hw;
            const double mu = means[s * groups + gi], rstd = rstds[s * groups + gi];
            double mean_dxhat = 0, mean_dxhat_xhat = 0;
            for (int64_t cc = 0; cc < cpg; ++cc) {
              const int64_t ch = gi * cpg + cc;
              double dg = 0, db = 0;
              for (int64_t p = 0; p < hw; ++p) {
                const int64_t idx = base + cc * hw + p;
                const double xhat = (v[idx] - mu) * rstd;
                const double dy = g[idx];
                dg += dy * xhat;
                db += dy;
                const double dxhat = dy * gm[ch];
                mean_dxhat += dxhat;
                mean_dxhat_xhat += dxhat * xhat;
              }
              if (need_g) t.grad_buffer(ig)[ch] += static_cast<T>(dg);
              if (need_b) t.grad_buffer(ib)[ch] += static_cast<T>(db);
            }
            if (!need_x) continue;
            mean_dxhat /= static_cast<double>(m);
            mean_dxhat_xhat /= static_cast<double>(m);
            auto dx = t.grad_buffer(ix).data();
            for (int64_t cc = 0; cc < cpg; ++cc) {
              const int64_t ch = gi * cpg + cc;
              for (int64_t p = 0; p < hw; ++p) {
                const int64_t idx = base + cc * hw + p;
                const double xhat = (v[idx] - mu) * rstd;
                const double dxhat = static_cast<double>(g[idx]) * gm[ch];
                dx[idx] += static_cast<T>(rstd * (dxhat - mean_dxhat - xhat * mean_dxhat_xhat));
              }
            }
          }
      });
}

template <typename T>
Var<T> mean_square(const Var<T>& x) {
  double acc = 0;
  for (T v : x.value().data()) acc += static_cast<double>(v) * v;
  const double n = static_cast<double>(x.value().numel());
  const int ix = x.id();
  return x.tape()->record("mean_square", Tensor<T>::scalar(static_cast<T>(acc / n)), {x},
                          [ix, n](Tape<T>& t, const Tensor<T>& g) {
                            auto d = t.grad_buffer(ix).data();
                            auto v = t.value(ix).data();
                            const T k = static_cast<T>(2.0 / n) * g[0];
                            for (size_t i = 0; i < d.size(); ++i) d[i] += k * v[i];
                          });
}

template <typename T>
Var<T> sum(const Var<T>& x) {
  double acc = 0;
  for (T v : x.value().data()) acc += v;
  const int ix = x.id();
  return x.tape()->record("sum", Tensor<T>::scalar(static_cast<T>(acc)), {x}, [ix](Tape<T>& t, const Tensor<T>& g) {
    for (T& d : t.grad_buffer(ix).data()) d += g[0];
  });
}

template <typename T>
Var<T> mean(const Var<T>& x) {
  double acc = 0;
  for (T v : x.value().data()) acc += v;
  const double n = static_cast<double>(x.value().numel());
  const int ix = x.id();
  return x.tape()->record("mean", Tensor<T>::scalar(static_cast<T>(acc / n)), {x},
                          [ix, n](Tape<T>& t, const Tensor<T>& g) {
                            const T k = g[0] / static_cast<T>(n);
                            for (T& d : t.grad_buffer(ix).data()) d += k;
                          });
}

template <typename T>
Var<T> concat_channels(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw InvalidArgument("concat_channels: no inputs");
  const Shape& s0 = parts[0].shape();
  require_rank(s0, 4, "concat_channels");
  int64_t total_c = 0;
  std::vector<int64_t> chans;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    require_rank(s, 4, "concat_channels");
    if (s[0] != s0[0] || s[2] != s0[2] || s[3] != s0[3]) {
      throw InvalidArgument("concat_channels: incompatible shapes " + shape_str(s0) + " and " + shape_str(s));
    }
    chans.push_back(s[1]);
    total_c += s[1];
  }
  const int64_t n = s0[0], hw = s0[2] * s0[3];
  Tensor<T> out(Shape{n, total_c, s0[2], s0[3]});
  for (int64_t s = 0; s < n; ++s) {
    int64_t off = 0;
    for (size_t i = 0; i < parts.size(); ++i) {
      auto src = parts[i].value().data().subspan(static_cast<size_t>(s * chans[i] * hw),
                                                 static_cast<size_t>(chans[i] * hw));
      std::copy(src.begin(), src.end(), out.data().begin() + (s * total_c + off) * hw);
      off += chans[i];
    }
  }
  std::vector<int> ids;
  for (const auto& p : parts) ids.push_back(p.id());
  return parts[0].tape()->record("concat_channels", std::move(out), parts,
                                 [ids, chans, n, hw, total_c](Tape<T>& t, const Tensor<T>& g) {
                                   int64_t off = 0;
                                   for (size_t i = 0; i < ids.size(); ++i) {
                                     if (t.requires_grad(ids[i])) {
                                       auto d = t.grad_buffer(ids[i]).data();
                                       for (int64_t s = 0; s < n; ++s)
                                         for (int64_t j = 0; j < chans[i] * hw; ++j)
                                           d[s * chans[i] * hw + j] += g[(s * total_c + off) * hw + j];
                                     }
                                     off += chans[i];
                                   }
                                 });
}

template <typename T>
std::vector<Var<T>> split_channels(const Var<T>& x, const std::vector<int64_t>& sizes) {
  require_rank(x.shape(), 4, "split_channels");
  const int64_t n = x.shape()[0], c = x.shape()[1], hw = x.shape()[2] * x.shape()[3];
  int64_t total = 0;
  for (int64_t s : sizes) {
    if (s <= 0) throw InvalidArgument("split_channels: sizes must be positive");
    total += s;
  }
  if (total != c) {
    throw InvalidArgument("split_channels: sizes sum to " + std::to_string(total) + " but input has " +
                          std::to_string(c) + " channels");
  }
  std::vector<Var<T>> outs;
  int64_t off = 0;
  const int ix = x.id();
  for (int64_t cs : sizes) {
    Tensor<T> out(Shape{n, cs, x.shape()[2], x.shape()[3]});
    auto v = x.value().data();
    for (int64_t s = 0; s < n; ++s)
      std::copy(v.begin() + (s * c + off) * hw, v.begin() + (s * c + off + cs) * hw,
                out.data().begin() + s * cs * hw);
    outs.push_back(x.tape()->record("split_channels", std::move(out), {x},
                                    [ix, n, c, hw, cs, off](Tape<T>& t, const Tensor<T>& g) {
                                      auto d = t.grad_buffer(ix).data();
                                      for (int64_t s = 0; s < n; ++s)
                                        for (int64_t j = 0; j < cs * hw; ++j)
                                          d[(s * c + off) * hw + j] += g[s * cs * hw + j];
                                    }));
    off += cs;
  }
  return outs;
}

namespace {
constexpr std::array<std::pair<OpKind, std::string_view>, 18> kOpNames{{
    {OpKind::kAdd, "add"},
    {OpKind::kSub, "sub"},
    {OpKind::kMul, "mul"},
    {OpKind::kAddChannel, "add_channel"},
    {OpKind::kScalarAffine, "scalar_affine"},
    {OpKind::kSilu, "silu"},
    {OpKind::kExp, "exp"},
    {OpKind::kMatmul, "matmul"},
    {OpKind::kLinear, "linear"},
    {OpKind::kConv2d, "conv2d"},
    {OpKind::kUpsampleNearest2x, "upsample_nearest2x"},
    {OpKind::kDownsampleStride2x, "downsample_stride2x"},
    {OpKind::kGroupNorm, "group_norm"},
    {OpKind::kMeanSquare, "mean_square"},
    {OpKind::kMean, "mean"},
    {OpKind::kSum, "sum"},
    {OpKind::kConcatChannels, "concat_channels"},
    {OpKind::kSplitChannels, "split_channels"},
}};
}  // namespace

OpKind op_kind_from_string(std::string_view name) {
  for (const auto& [k, n] : kOpNames)
    if (n == name) return k;
  throw InvalidArgument("unknown op kind '" + std::string(name) + "'");
}

std::string_view to_string(OpKind kind) {
  for (const auto& [k, n] : kOpNames)
    if (k == kind) return n;
  throw InvalidArgument("unknown op kind");
}

const std::vector<OpKind>& all_op_kinds() {
  static const std::vector<OpKind> kinds = [] {
    std::vector<OpKind> v;
    for (const auto& [k, n] : kOpNames) v.push_back(k);
    return v;
  }();
  return kinds;
}

template <typename T>
Var<T> forward_op(OpKind kind, const std::vector<Var<T>>& in, const OpAttrs& attrs) {
  auto need = [&](size_t count) {
    if (in.size() < count) {
      throw InvalidArgument(std::string(to_string(kind)) + ": expected " + std::to_string(count) + " inputs");
    }
  };
  switch (kind) {
    case OpKind::kAdd: need(2); return add(in[0], in[1]);
    case OpKind::kSub: need(2); return sub(in[0], in[1]);
    case OpKind::kMul: need(2); return mul(in[0], in[1]);
    case OpKind::kAddChannel: need(2); return add_channel(in[0], in[1]);
    case OpKind::kScalarAffine:
      need(1);
      return scalar_affine(in[0], static_cast<T>(attrs.scale), static_cast<T>(attrs.shift));
    case OpKind::kSilu: need(1); return silu(in[0]);
    case OpKind::kExp: need(1); return exp(in[0]);
    case OpKind::kMatmul: need(2); return matmul(in[0], in[1]);
    case OpKind::kLinear:
      need(2);
      return linear(in[0], in[1], in.size() > 2 ? std::optional<Var<T>>(in[2]) : std::nullopt);
    case OpKind::kConv2d:
      need(2);
      return conv2d(in[0], in[1], in.size() > 2 ? std::optional<Var<T>>(in[2]) : std::nullopt, attrs.conv);
    case OpKind::kUpsampleNearest2x: need(1); return upsample_nearest2x(in[0]);
    case OpKind::kDownsampleStride2x: need(1); return downsample_stride2x(in[0]);
    case OpKind::kGroupNorm: need(3); return group_norm(in[0], in[1], in[2], attrs.groups, attrs.eps);
    case OpKind::kMeanSquare: need(1); return mean_square(in[0]);
    case OpKind::kMean: need(1); return mean(in[0]);
    case OpKind::kSum: need(1); return sum(in[0]);
    case OpKind::kConcatChannels: need(1); return concat_channels(in);
    case OpKind::kSplitChannels: {
      need(1);
      auto parts = split_channels(in[0], attrs.split_sizes);
      return parts.at(static_cast<size_t>(attrs.split_index));
    }
  }
  throw InvalidArgument("unknown op kind");
}

#define TERRA_INSTANTIATE_OPS(T)                                                                     \
  template Var<T> add(const Var<T>&, const Var<T>&);                                                 \
  template Var<T> sub(const Var<T>&, const Var<T>&);                                                 \
  template Var<T> mul(const Var<T>&, const Var<T>&);                                                 \
  template Var<T> add_channel(const Var<T>&, const Var<T>&);                                         \
  template Var<T> scalar_affine(const Var<T>&, T, T);                                                \
  template Var<T> silu(const Var<T>&);                                                               \
  template Var<T> exp(const Var<T>&);                                                                \
  template Var<T> matmul(const Var<T>&, const Var<T>&);                                              \
  template Var<T> linear(const Var<T>&, const Var<T>&, const std::optional<Var<T>>&);                \
  template Var<T> conv2d(const Var<T>&, const Var<T>&, const std::optional<Var<T>>&, Conv2dAttrs);   \
  template Var<T> upsample_nearest2x(const Var<T>&);                                                 \
  template Var<T> downsample_stride2x(const Var<T>&);                                                \
  template Var<T> group_norm(const Var<T>&, const Var<T>&, const Var<T>&, int, double);              \
  template Var<T> mean_square(const Var<T>&);                                                        \
  template Var<T> mean(const Var<T>&);                                                               \
  template Var<T> sum(const Var<T>&);                                                                \
  template Var<T> concat_channels(const std::vector<Var<T>>&);                                       \
  template std::vector<Var<T>> split_channels(const Var<T>&, const std::vector<int64_t>&);           \
  template Var<T> forward_op(OpKind, const std::vector<Var<T>>&, const OpAttrs&);

TERRA_INSTANTIATE_OPS(float)
TERRA_INSTANTIATE_OPS(double)

}  // namespace terra::ad
