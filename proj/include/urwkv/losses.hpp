// SPDX-License-Identifier: Apache-2.0
/**
 * @file   losses.hpp
 * @brief  Training objective: weighted L1 + (1 - SSIM) + perceptual term.
 */

#ifndef URWKV_LOSSES_HPP
#define URWKV_LOSSES_HPP

#include <cstdint>

#include "urwkv/config.hpp"
#include "urwkv/model.hpp"
#include "urwkv/tensor.hpp"

namespace urwkv {

/// Differentiable mean SSIM of two C x H x W maps (H, W >= 11); the value
/// equals ssim() from the metrics module.
Tensor ssim_index(const Tensor &a, const Tensor &b);

/// Mean absolute difference.
Tensor l1_loss(const Tensor &a, const Tensor &b);

/// Fixed, randomly initialized three-layer conv encoder used as a feature
/// space. Its weights never require grad.
class PerceptualNet {
public:
  explicit PerceptualNet(std::uint64_t seed = 0x5eed);

  Tensor features(const Tensor &image) const;
  /// Mean squared feature difference.
  Tensor distance(const Tensor &a, const Tensor &b) const;

private:
  ConvLayer layers_[3];
};

struct LossTerms {
  Tensor total;
  double l1 = 0.0;
  double ssim_term = 0.0; ///< 1 - SSIM
  double perceptual = 0.0;
};

/// Throws std::invalid_argument on a shape mismatch. The perceptual network
/// defaults to a shared instance with a fixed seed.
LossTerms composite_loss_terms(const Tensor &pred, const Tensor &target,
                               const LossWeights &weights,
                               const PerceptualNet *net = nullptr);

inline Tensor composite_loss(const Tensor &pred, const Tensor &target,
                             const LossWeights &weights,
                             const PerceptualNet *net = nullptr) {
  return composite_loss_terms(pred, target, weights, net).total;
}

} // namespace urwkv

#endif // URWKV_LOSSES_HPP
