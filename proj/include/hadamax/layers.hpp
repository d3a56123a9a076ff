#pragma once

// Network layers on top of the tape. Feature maps are channels-last
// [B, H, W, C]; every spatial op uses SAME padding, out = ceil(in / stride).

#include <cstdint>
#include <utility>

#include "hadamax/autodiff.hpp"

namespace hadamax::nn {

struct Stride2 {
  std::size_t h = 1;
  std::size_t w = 1;
};

/// SAME padding along one axis: total = max(0, (ceil(in/s)-1)*s + k - in),
/// floor(total/2) before, the remainder after.
struct SamePad {
  std::size_t out = 0;
  std::size_t before = 0;
  std::size_t after = 0;
};
SamePad same_padding(std::size_t in, std::size_t kernel, std::size_t stride);

template <typename T>
struct ConvParams {
  Tensor<T> kernel;  // [kh, kw, c_in, c_out]
  Tensor<T> bias;    // [c_out]
  Stride2 stride;
};

template <typename T>
struct NormParams {
  Tensor<T> gain;
  Tensor<T> offset;
  T epsilon = T(1e-5);
};

/// Cross-correlation plus bias.
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& kernel, const Var<T>& bias, Stride2 stride);

/// Per-window maximum; padded cells count as -inf. The gradient goes to the
/// first maximal cell of each window in row-major order.
template <typename T>
Var<T> max_pool2d(const Var<T>& x, Stride2 window, Stride2 stride);

/// Normalizes over the trailing `axes` dimensions (1 = last axis only).
template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gain, const Var<T>& offset, T epsilon, std::size_t axes = 1);

/// Exact GELU, 0.5 x (1 + erf(x / sqrt 2)).
template <typename T>
Var<T> gelu(const Var<T>& x);

template <typename T>
Var<T> relu(const Var<T>& x);

/// x[B,F] W[F,U] + b[U]
template <typename T>
Var<T> dense(const Var<T>& x, const Var<T>& w, const Var<T>& b);

enum class InitKind { xavier_normal, he_normal, lecun_normal };

/// (fan_in, fan_out) of a weight shape; the leading axes of a conv kernel are
/// the receptive field.
std::pair<std::size_t, std::size_t> fans(const Shape& shape);

template <typename T>
Tensor<T> init(InitKind kind, const Shape& shape, std::uint64_t seed);

}  // namespace hadamax::nn
