// SPDX-License-Identifier: Apache-2.0

#include "urwkv/ssf.hpp"

#include <stdexcept>
#include <vector>

#include "urwkv/ops.hpp"

namespace urwkv {

Tensor align_to(const Tensor &x, std::size_t h, std::size_t w) {
  if (x.ndim() != 3) {
    throw std::invalid_argument("align_to expects C x H x W, got " +
                                shape_str(x.shape()));
  }
  const std::size_t xh = x.dim(1);
  const std::size_t xw = x.dim(2);
  if (xh == h && xw == w) {
    return x;
  }
  if (xh > h && xh % h == 0 && xw % w == 0 && xh / h == xw / w) {
    return avg_pool2d(x, xh / h);
  }
  return resize_bilinear(x, h, w);
}

Tensor align_states(std::span<const Tensor> encoder_states, std::size_t h,
                    std::size_t w) {
  if (encoder_states.size() != 3) {
    throw std::invalid_argument("align_states needs three encoder states, got " +
                                std::to_string(encoder_states.size()));
  }
  std::vector<Tensor> planes;
  for (const Tensor &e : encoder_states) {
    if (!e.defined()) {
      throw std::invalid_argument("align_states: missing encoder state");
    }
    planes.push_back(align_to(channel_mean(e), h, w));
  }
  return concat(planes, 0);
}

SsfParams SsfParams::init(std::size_t branch_width, Rng &rng) {
  SsfParams p;
  p.branch1_w = conv_weight(branch_width, 3, 1, 1, rng);
  p.branch1_b = conv_bias(branch_width, 3, rng);
  p.branch3_w = conv_weight(branch_width, 3, 3, 3, rng);
  p.branch3_b = conv_bias(branch_width, 27, rng);
  p.branch5_w = conv_weight(branch_width, 3, 5, 5, rng);
  p.branch5_b = conv_bias(branch_width, 75, rng);
  p.fuse_w = conv_weight(1, 3 * branch_width, 1, 1, rng);
  p.fuse_b = constant_param({1}, 0.0);
  return p;
}

void SsfParams::collect(const std::string &prefix, ParamList &out) const {
  out.emplace_back(prefix + "branch1.weight", branch1_w);
  out.emplace_back(prefix + "branch1.bias", branch1_b);
  out.emplace_back(prefix + "branch3.weight", branch3_w);
  out.emplace_back(prefix + "branch3.bias", branch3_b);
  out.emplace_back(prefix + "branch5.weight", branch5_w);
  out.emplace_back(prefix + "branch5.bias", branch5_b);
  out.emplace_back(prefix + "fuse.weight", fuse_w);
  out.emplace_back(prefix + "fuse.bias", fuse_b);
}

Tensor predict_gate(const Tensor &aligned, const SsfParams &params) {
  if (aligned.ndim() != 3 || aligned.dim(0) != 3) {
    throw std::invalid_argument("predict_gate expects 3 x H x W, got " +
                                shape_str(aligned.shape()));
  }
  const Tensor branches[] = {
      conv2d(aligned, params.branch1_w, params.branch1_b, 1, Padding2d{}),
      conv2d(aligned, params.branch3_w, params.branch3_b, 1,
             Padding2d::uniform(1)),
      conv2d(aligned, params.branch5_w, params.branch5_b, 1,
             Padding2d::uniform(2)),
  };
  const Tensor fused =
      conv2d(concat(branches, 0), params.fuse_w, params.fuse_b, 1, Padding2d{});
  return sigmoid(fused);
}

SkipProjection SkipProjection::init(std::size_t in, std::size_t out, Rng &rng) {
  return {conv_weight(out, in, 1, 1, rng), conv_bias(out, in, rng)};
}

void SkipProjection::collect(const std::string &prefix, ParamList &out) const {
  out.emplace_back(prefix + "weight", weight);
  out.emplace_back(prefix + "bias", bias);
}

Tensor fuse_skip(const Tensor &decoder_in, const Tensor &encoder_feat,
                 const Tensor &gate, const SkipProjection &projection) {
  if (decoder_in.ndim() != 3 || encoder_feat.ndim() != 3 ||
      decoder_in.dim(1) != encoder_feat.dim(1) ||
      decoder_in.dim(2) != encoder_feat.dim(2)) {
    throw std::invalid_argument("fuse_skip: encoder feature " +
                                shape_str(encoder_feat.shape()) +
                                " does not spatially match decoder input " +
                                shape_str(decoder_in.shape()));
  }
  Tensor skip = encoder_feat;
  if (gate.defined()) {
    skip = mul(encoder_feat, gate);
  }
  const Tensor parts[] = {skip, decoder_in};
  return conv2d(concat(parts, 0), projection.weight, projection.bias, 1,
                Padding2d{});
}

} // namespace urwkv
