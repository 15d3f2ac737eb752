// SPDX-License-Identifier: Apache-2.0
/**
 * @file   ops.hpp
 * @brief  Differentiable tensor operations.
 *
 * Feature maps are laid out C x H x W, token matrices T x C, kernels
 * C_out x C_in x kH x kW, all row-major. Every op throws
 * std::invalid_argument on shape violations.
 */

#ifndef URWKV_OPS_HPP
#define URWKV_OPS_HPP

#include <cstddef>
#include <span>

#include "urwkv/tensor.hpp"

namespace urwkv {

enum class BinaryOp { kAdd, kSub, kMul, kDiv };
enum class UnaryOp { kNeg, kSigmoid, kTanh, kRelu, kSquaredRelu, kAbs, kSquare };

/// Numpy-style broadcasting: shapes are right-aligned and size-1 axes
/// stretch. Gradients are sum-reduced back onto each source shape.
Tensor elementwise(BinaryOp op, const Tensor &a, const Tensor &b);
Tensor elementwise(UnaryOp op, const Tensor &a);

Shape broadcast_shape(const Shape &a, const Shape &b);

inline Tensor add(const Tensor &a, const Tensor &b) {
  return elementwise(BinaryOp::kAdd, a, b);
}
inline Tensor sub(const Tensor &a, const Tensor &b) {
  return elementwise(BinaryOp::kSub, a, b);
}
inline Tensor mul(const Tensor &a, const Tensor &b) {
  return elementwise(BinaryOp::kMul, a, b);
}
inline Tensor div(const Tensor &a, const Tensor &b) {
  return elementwise(BinaryOp::kDiv, a, b);
}
inline Tensor neg(const Tensor &a) { return elementwise(UnaryOp::kNeg, a); }
inline Tensor sigmoid(const Tensor &a) {
  return elementwise(UnaryOp::kSigmoid, a);
}
inline Tensor tanh(const Tensor &a) { return elementwise(UnaryOp::kTanh, a); }
inline Tensor relu(const Tensor &a) { return elementwise(UnaryOp::kRelu, a); }
/// max(x, 0)^2
inline Tensor squared_relu(const Tensor &a) {
  return elementwise(UnaryOp::kSquaredRelu, a);
}
inline Tensor abs(const Tensor &a) { return elementwise(UnaryOp::kAbs, a); }
inline Tensor square(const Tensor &a) {
  return elementwise(UnaryOp::kSquare, a);
}

inline Tensor operator+(const Tensor &a, const Tensor &b) { return add(a, b); }
inline Tensor operator-(const Tensor &a, const Tensor &b) { return sub(a, b); }
inline Tensor operator*(const Tensor &a, const Tensor &b) { return mul(a, b); }

/// s * a
Tensor scale(const Tensor &a, double s);
/// a + s
Tensor add_scalar(const Tensor &a, double s);
/// Elementwise clamp; gradient passes only where lo < x < hi.
Tensor clamp(const Tensor &a, double lo, double hi);

/// Scalar reductions, result shape [1].
Tensor sum(const Tensor &a);
Tensor mean(const Tensor &a);

Tensor matmul(const Tensor &a, const Tensor &b);
Tensor transpose(const Tensor &a);
Tensor reshape(const Tensor &a, Shape shape);
Tensor concat(std::span<const Tensor> parts, std::size_t axis);
Tensor slice(const Tensor &a, std::size_t axis, std::size_t start,
             std::size_t length);

struct Padding2d {
  std::size_t top = 0;
  std::size_t bottom = 0;
  std::size_t left = 0;
  std::size_t right = 0;

  static Padding2d uniform(std::size_t p) { return {p, p, p, p}; }
  /// Symmetric padding preserving the extent of a stride-1 kH x kW kernel.
  static Padding2d same(std::size_t kh, std::size_t kw) {
    return {kh / 2, kh / 2, kw / 2, kw / 2};
  }
};

/// x: C_in x H x W, weight: C_out x C_in x kH x kW, bias: C_out or undefined.
/// Output extent (H + pad - kH) / stride + 1 must be integral.
Tensor conv2d(const Tensor &x, const Tensor &weight, const Tensor &bias,
              std::size_t stride, Padding2d pad);

/// Non-overlapping factor x factor average pooling; extents must divide.
Tensor avg_pool2d(const Tensor &x, std::size_t factor);
Tensor upsample_nearest(const Tensor &x, std::size_t factor);
/// Half-pixel-centred bilinear resampling (align_corners = false).
Tensor resize_bilinear(const Tensor &x, std::size_t out_h, std::size_t out_w);

/// C x H x W -> 1 x H x W mean across channels.
Tensor channel_mean(const Tensor &x);
/// C x H x W -> [C] global average pool.
Tensor spatial_mean(const Tensor &x);

/// LayerNorm across the channel axis at every spatial position of a
/// C x H x W map: (x - mu) / sqrt(var + eps) * gamma + beta, with gamma and
/// beta of shape [C].
Tensor layer_norm_channels(const Tensor &x, const Tensor &gamma,
                           const Tensor &beta, double eps = 1e-5);

/// Reflect-pads the bottom and right edges of a C x H x W map.
Tensor reflect_pad(const Tensor &x, std::size_t bottom, std::size_t right);
/// Keeps the top-left out_h x out_w window.
Tensor crop(const Tensor &x, std::size_t out_h, std::size_t out_w);

} // namespace urwkv

#endif // URWKV_OPS_HPP
