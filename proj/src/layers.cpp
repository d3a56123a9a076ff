#include "hadamax/layers.hpp"

#include <cmath>
#include <cstring>
#include <limits>
#include <random>

#include "hadamax/kernels.hpp"

namespace hadamax::nn {

SamePad same_padding(std::size_t in, std::size_t kernel, std::size_t stride) {
  if (kernel == 0 || stride == 0) throw ShapeError("kernel and stride must be positive");
  SamePad p;
  p.out = (in + stride - 1) / stride;
  const std::size_t span = (p.out == 0 ? 0 : (p.out - 1) * stride) + kernel;
  const std::size_t total = span > in ? span - in : 0;
  p.before = total / 2;
  p.after = total - p.before;
  return p;
}

namespace {

struct ConvGeometry {
  std::size_t batch, h, w, cin, kh, kw, cout, sh, sw;
  SamePad py, px;
  std::size_t rows() const { return batch * py.out * px.out; }
  std::size_t depth() const { return kh * kw * cin; }
};

// Patch matrix [B*Ho*Wo, kh*kw*cin]; zero where the window hangs over the border.
template <typename T>
void im2col(const ConvGeometry& g, const T* x, T* col) {
  const std::size_t depth = g.depth();
  std::size_t r = 0;
  for (std::size_t b = 0; b < g.batch; ++b)
    for (std::size_t oy = 0; oy < g.py.out; ++oy)
      for (std::size_t ox = 0; ox < g.px.out; ++ox, ++r) {
        T* row = col + r * depth;
        for (std::size_t ky = 0; ky < g.kh; ++ky) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.sh + ky) - static_cast<std::ptrdiff_t>(g.py.before);
          for (std::size_t kx = 0; kx < g.kw; ++kx) {
            T* dst = row + (ky * g.kw + kx) * g.cin;
            const std::ptrdiff_t ix =
                static_cast<std::ptrdiff_t>(ox * g.sw + kx) - static_cast<std::ptrdiff_t>(g.px.before);
            if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(g.h) || ix >= static_cast<std::ptrdiff_t>(g.w)) {
              std::memset(dst, 0, g.cin * sizeof(T));
            } else {
              const T* src = x + ((b * g.h + static_cast<std::size_t>(iy)) * g.w + static_cast<std::size_t>(ix)) * g.cin;
              std::memcpy(dst, src, g.cin * sizeof(T));
            }
          }
        }
      }
}

template <typename T>
void col2im_add(const ConvGeometry& g, const T* col, T* x) {
  const std::size_t depth = g.depth();
  std::size_t r = 0;
  for (std::size_t b = 0; b < g.batch; ++b)
    for (std::size_t oy = 0; oy < g.py.out; ++oy)
      for (std::size_t ox = 0; ox < g.px.out; ++ox, ++r) {
        const T* row = col + r * depth;
        for (std::size_t ky = 0; ky < g.kh; ++ky) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.sh + ky) - static_cast<std::ptrdiff_t>(g.py.before);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
          for (std::size_t kx = 0; kx < g.kw; ++kx) {
            const std::ptrdiff_t ix =
                static_cast<std::ptrdiff_t>(ox * g.sw + kx) - static_cast<std::ptrdiff_t>(g.px.before);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) continue;
            T* dst = x + ((b * g.h + static_cast<std::size_t>(iy)) * g.w + static_cast<std::size_t>(ix)) * g.cin;
            kernels::axpy(g.cin, T{1}, row + (ky * g.kw + kx) * g.cin, dst);
          }
        }
      }
}

template <typename T>
void add_bias_rows(std::size_t rows, std::size_t cols, const T* bias, T* out) {
  for (std::size_t r = 0; r < rows; ++r) std::memcpy(out + r * cols, bias, cols * sizeof(T));
}

template <typename T>
void sum_rows_into(std::size_t rows, std::size_t cols, const T* g, T* dst) {
  for (std::size_t r = 0; r < rows; ++r) kernels::axpy(cols, T{1}, g + r * cols, dst);
}

}  // namespace

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& kernel, const Var<T>& bias, Stride2 stride) {
  const auto& xv = x.value();
  const auto& kv = kernel.value();
  const auto& bv = bias.value();
  if (xv.rank() != 4) throw ShapeError("conv2d input must be [B,H,W,C], got " + shape_string(xv.shape()));
  if (kv.rank() != 4) throw ShapeError("conv2d kernel must be [kh,kw,cin,cout], got " + shape_string(kv.shape()));
  if (kv.extent(2) != xv.extent(3))
    throw ShapeError("conv2d channel mismatch: input has " + std::to_string(xv.extent(3)) + ", kernel expects " +
                     std::to_string(kv.extent(2)));
  if (bv.size() != kv.extent(3)) throw ShapeError("conv2d bias size mismatch");
  if (kv.extent(0) == 0 || kv.extent(1) == 0) throw ShapeError("conv2d kernel extents must be positive");

  ConvGeometry g{xv.extent(0), xv.extent(1), xv.extent(2), xv.extent(3), kv.extent(0), kv.extent(1), kv.extent(3),
                 stride.h,     stride.w,     {},           {}};
  g.py = same_padding(g.h, g.kh, g.sh);
  g.px = same_padding(g.w, g.kw, g.sw);
  const std::size_t M = g.rows(), K = g.depth(), N = g.cout;

  // Parallel branches reading the same input share one patch matrix.
  const std::string key = "im2col:" + std::to_string(x.id()) + ":" + std::to_string(g.kh) + "x" + std::to_string(g.kw) +
                          "/" + std::to_string(g.sh) + "x" + std::to_string(g.sw);
  Tape<T>& tape = x.tape();
  auto col = tape.template memo<std::vector<T>>(key, [&] {
    auto c = std::make_shared<std::vector<T>>(M * K);
    im2col(g, xv.raw(), c->data());
    return c;
  });

  Tensor<T> out({g.batch, g.py.out, g.px.out, N});
  add_bias_rows(M, N, bv.raw(), out.raw());
  kernels::gemm(M, N, K, col->data(), K, kv.raw(), N, out.raw(), N);

  const std::size_t ix = x.id(), ik = kernel.id(), ib = bias.id();
  return tape.record("conv2d", std::move(out), {ix, ik, ib}, [=](Tape<T>& tp, std::size_t self) {
    const auto& grad = tp.grad_of(self);
    if (T* gb = tp.grad_buffer(ib)) sum_rows_into(M, N, grad.raw(), gb);
    if (T* gk = tp.grad_buffer(ik)) kernels::gemm_tn(K, N, M, col->data(), K, grad.raw(), N, gk, N);
    if (T* gx = tp.grad_buffer(ix)) {
      const auto& kern = tp.value(ik);
      std::vector<T> kT(K * N);
      kernels::transpose(K, N, kern.raw(), kT.data());
      std::vector<T> dcol(M * K, T{0});
      kernels::gemm(M, K, N, grad.raw(), N, kT.data(), K, dcol.data(), K);
      col2im_add(g, dcol.data(), gx);
    }
  });
}

template <typename T>
Var<T> max_pool2d(const Var<T>& x, Stride2 window, Stride2 stride) {
  const auto& xv = x.value();
  if (xv.rank() != 4) throw ShapeError("max_pool2d input must be [B,H,W,C], got " + shape_string(xv.shape()));
  if (window.h == 0 || window.w == 0) throw ShapeError("max_pool2d window must be non-empty");
  const std::size_t B = xv.extent(0), H = xv.extent(1), W = xv.extent(2), C = xv.extent(3);
  const SamePad py = same_padding(H, window.h, stride.h);
  const SamePad px = same_padding(W, window.w, stride.w);
  Tensor<T> out({B, py.out, px.out, C});
  std::vector<std::size_t> argmax(out.size());
  const std::size_t none = xv.size();
  std::size_t o = 0;
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t oy = 0; oy < py.out; ++oy)
      for (std::size_t ox = 0; ox < px.out; ++ox, o += C) {
        T* best = out.raw() + o;
        std::size_t* where = argmax.data() + o;
        std::fill(best, best + C, -std::numeric_limits<T>::infinity());
        std::fill(where, where + C, none);
        for (std::size_t ky = 0; ky < window.h; ++ky) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride.h + ky) - static_cast<std::ptrdiff_t>(py.before);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
          for (std::size_t kx = 0; kx < window.w; ++kx) {
            const std::ptrdiff_t iw =
                static_cast<std::ptrdiff_t>(ox * stride.w + kx) - static_cast<std::ptrdiff_t>(px.before);
            if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(W)) continue;
            const std::size_t base = ((b * H + static_cast<std::size_t>(iy)) * W + static_cast<std::size_t>(iw)) * C;
            for (std::size_t c = 0; c < C; ++c) {
              const T v = xv[base + c];
              if (where[c] == none || v > best[c]) {
                best[c] = v;
                where[c] = base + c;
              }
            }
          }
        }
      }
  const std::size_t ix = x.id();
  return x.tape().record("max_pool2d", std::move(out), {ix}, [=, argmax = std::move(argmax)](Tape<T>& tp, std::size_t self) {
    T* gx = tp.grad_buffer(ix);
    if (!gx) return;
    const auto& grad = tp.grad_of(self);
    for (std::size_t i = 0; i < argmax.size(); ++i)
      if (argmax[i] != none) gx[argmax[i]] += grad[i];
  });
}

template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gain, const Var<T>& offset, T epsilon, std::size_t axes) {
  const auto& xv = x.value();
  if (axes == 0 || axes > xv.rank()) throw ShapeError("layer_norm axes out of range");
  std::size_t F = 1;
  for (std::size_t d = xv.rank() - axes; d < xv.rank(); ++d) F *= xv.extent(d);
  const auto& gv = gain.value();
  const auto& ov = offset.value();
  if (gv.size() != F || ov.size() != F)
    throw ShapeError("layer_norm parameters must cover " + std::to_string(F) + " features");
  const std::size_t rows = F == 0 ? 0 : xv.size() / F;
  Tensor<T> out(xv.shape());
  Tensor<T> xhat(xv.shape());
  std::vector<T> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = xv.raw() + r * F;
    T mu{0};
    for (std::size_t f = 0; f < F; ++f) mu += xr[f];
    mu /= static_cast<T>(F);
    T var{0};
    for (std::size_t f = 0; f < F; ++f) var += (xr[f] - mu) * (xr[f] - mu);
    var /= static_cast<T>(F);
    const T is = T{1} / std::sqrt(var + epsilon);
    inv_std[r] = is;
    T* hr = xhat.raw() + r * F;
    T* yr = out.raw() + r * F;
    for (std::size_t f = 0; f < F; ++f) {
      hr[f] = (xr[f] - mu) * is;
      yr[f] = hr[f] * gv[f] + ov[f];
    }
  }
  const std::size_t ix = x.id(), ig = gain.id(), io = offset.id();
  return x.tape().record("layer_norm", std::move(out), {ix, ig, io},
                         [=, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape<T>& tp, std::size_t self) {
                           const auto& grad = tp.grad_of(self);
                           const auto& gv2 = tp.value(ig);
                           T* gg = tp.grad_buffer(ig);
                           T* go = tp.grad_buffer(io);
                           T* gx = tp.grad_buffer(ix);
                           std::vector<T> dxhat(F);
                           for (std::size_t r = 0; r < rows; ++r) {
                             const T* dy = grad.raw() + r * F;
                             const T* hr = xhat.raw() + r * F;
                             if (gg)
                               for (std::size_t f = 0; f < F; ++f) gg[f] += dy[f] * hr[f];
                             if (go)
                               for (std::size_t f = 0; f < F; ++f) go[f] += dy[f];
                             if (!gx) continue;
                             T s1{0}, s2{0};
                             for (std::size_t f = 0; f < F; ++f) {
                               dxhat[f] = dy[f] * gv2[f];
                               s1 += dxhat[f];
                               s2 += dxhat[f] * hr[f];
                             }
                             const T n = static_cast<T>(F);
                             T* gr = gx + r * F;
                             for (std::size_t f = 0; f < F; ++f)
                               gr[f] += inv_std[r] / n * (n * dxhat[f] - s1 - hr[f] * s2);
                           }
                         });
}

template <typename T>
Var<T> gelu(const Var<T>& x) {
  const auto& xv = x.value();
  Tensor<T> out(xv.shape());
  kernels::gelu_forward(xv.size(), xv.raw(), out.raw());
  const std::size_t ix = x.id();
  return x.tape().record("gelu", std::move(out), {ix}, [=](Tape<T>& tp, std::size_t self) {
    T* gx = tp.grad_buffer(ix);
    if (!gx) return;
    const auto& in = tp.value(ix);
    kernels::gelu_backward(in.size(), in.raw(), tp.grad_of(self).raw(), gx);
  });
}

template <typename T>
Var<T> relu(const Var<T>& x) {
  const auto& xv = x.value();
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] > T{0} ? xv[i] : T{0};
  const std::size_t ix = x.id();
  return x.tape().record("relu", std::move(out), {ix}, [=](Tape<T>& tp, std::size_t self) {
    T* gx = tp.grad_buffer(ix);
    if (!gx) return;
    const auto& grad = tp.grad_of(self);
    const auto& in = tp.value(ix);
    for (std::size_t i = 0; i < in.size(); ++i)
      if (in[i] > T{0}) gx[i] += grad[i];
  });
}

template <typename T>
Var<T> dense(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
  const auto& xv = x.value();
  const auto& wv = w.value();
  const auto& bv = b.value();
  if (xv.rank() != 2 || wv.rank() != 2 || xv.extent(1) != wv.extent(0) || bv.size() != wv.extent(1))
    throw ShapeError("dense shape mismatch " + shape_string(xv.shape()) + " x " + shape_string(wv.shape()) + " + " +
                     shape_string(bv.shape()));
  const std::size_t B = xv.extent(0), F = xv.extent(1), U = wv.extent(1);
  Tensor<T> out({B, U});
  add_bias_rows(B, U, bv.raw(), out.raw());
  kernels::gemm(B, U, F, xv.raw(), F, wv.raw(), U, out.raw(), U);
  const std::size_t ix = x.id(), iw = w.id(), ib = b.id();
  return x.tape().record("dense", std::move(out), {ix, iw, ib}, [=](Tape<T>& tp, std::size_t self) {
    const auto& grad = tp.grad_of(self);
    if (T* gb = tp.grad_buffer(ib)) sum_rows_into(B, U, grad.raw(), gb);
    if (T* gw = tp.grad_buffer(iw)) kernels::gemm_tn(F, U, B, tp.value(ix).raw(), F, grad.raw(), U, gw, U);
    if (T* gx = tp.grad_buffer(ix)) {
      std::vector<T> wT(U * F);
      kernels::transpose(F, U, tp.value(iw).raw(), wT.data());
      kernels::gemm(B, F, U, grad.raw(), U, wT.data(), F, gx, F);
    }
  });
}

std::pair<std::size_t, std::size_t> fans(const Shape& shape) {
  if (shape.size() < 2) throw ShapeError("initializer needs rank >= 2, got " + shape_string(shape));
  std::size_t receptive = 1;
  for (std::size_t d = 0; d + 2 < shape.size(); ++d) receptive *= shape[d];
  return {receptive * shape[shape.size() - 2], receptive * shape[shape.size() - 1]};
}

template <typename T>
Tensor<T> init(InitKind kind, const Shape& shape, std::uint64_t seed) {
  const auto [fan_in, fan_out] = fans(shape);
  double stddev = 0.0;
  switch (kind) {
    case InitKind::xavier_normal: stddev = std::sqrt(2.0 / static_cast<double>(fan_in + fan_out)); break;
    case InitKind::he_normal: stddev = std::sqrt(2.0 / static_cast<double>(fan_in)); break;
    case InitKind::lecun_normal: stddev = std::sqrt(1.0 / static_cast<double>(fan_in)); break;
  }
  return Tensor<T>::create(shape, fill::Gaussian{0.0, stddev, seed});
}

#define HADAMAX_INSTANTIATE_LAYERS(T)                                                        \
  template Var<T> conv2d(const Var<T>&, const Var<T>&, const Var<T>&, Stride2);              \
  template Var<T> max_pool2d(const Var<T>&, Stride2, Stride2);                               \
  template Var<T> layer_norm(const Var<T>&, const Var<T>&, const Var<T>&, T, std::size_t);   \
  template Var<T> gelu(const Var<T>&);                                                       \
  template Var<T> relu(const Var<T>&);                                                       \
  template Var<T> dense(const Var<T>&, const Var<T>&, const Var<T>&);                        \
  template Tensor<T> init(InitKind, const Shape&, std::uint64_t);

HADAMAX_INSTANTIATE_LAYERS(float)
HADAMAX_INSTANTIATE_LAYERS(double)
#undef HADAMAX_INSTANTIATE_LAYERS

}  // namespace hadamax::nn
