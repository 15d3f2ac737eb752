// SPDX-License-Identifier: Apache-2.0
/**
 * @file   ssf.hpp
 * @brief  State-aware selective fusion of encoder features into the decoder.
 */

#ifndef URWKV_SSF_HPP
#define URWKV_SSF_HPP

#include <cstddef>
#include <span>
#include <string>

#include "urwkv/params.hpp"
#include "urwkv/tensor.hpp"

namespace urwkv {

/// Resamples a C x H x W map to C x h x w: identity, average pooling for an
/// integer downscale, bilinear otherwise.
Tensor align_to(const Tensor &x, std::size_t h, std::size_t w);

/// Channel-mean of each encoder state, aligned to h x w and stacked in stage
/// order: 3 x h x w.
Tensor align_states(std::span<const Tensor> encoder_states, std::size_t h,
                    std::size_t w);

struct SsfParams {
  Tensor branch1_w, branch1_b; ///< 1x1, 3 -> width
  Tensor branch3_w, branch3_b; ///< 3x3
  Tensor branch5_w, branch5_b; ///< 5x5
  Tensor fuse_w, fuse_b;       ///< 1x1, 3 * width -> 1

  static SsfParams init(std::size_t branch_width, Rng &rng);
  void collect(const std::string &prefix, ParamList &out) const;
};

/// Sigmoid spatial weight 1 x h x w from the aligned stack.
Tensor predict_gate(const Tensor &aligned, const SsfParams &params);

/// The 1x1 skip projection W_p applied after concatenation.
struct SkipProjection {
  Tensor weight; ///< C_out x C_in x 1 x 1
  Tensor bias;   ///< [C_out]

  static SkipProjection init(std::size_t in, std::size_t out, Rng &rng);
  void collect(const std::string &prefix, ParamList &out) const;
};

/// [gate * E, D] W_p. An undefined gate means plain concatenation.
Tensor fuse_skip(const Tensor &decoder_in, const Tensor &encoder_feat,
                 const Tensor &gate, const SkipProjection &projection);

} // namespace urwkv

#endif // URWKV_SSF_HPP
