// SPDX-License-Identifier: Apache-2.0

#include "urwkv/losses.hpp"

#include <stdexcept>

#include "urwkv/metrics.hpp"
#include "urwkv/ops.hpp"

namespace urwkv {

using detail::TensorImpl;

namespace {

void require_pair(const Tensor &a, const Tensor &b, const char *what) {
  if (a.shape() != b.shape() || a.ndim() != 3) {
    throw std::invalid_argument(std::string(what) + ": need equal C x H x W "
                                "shapes, got " + shape_str(a.shape()) +
                                " and " + shape_str(b.shape()));
  }
}

} // namespace

Tensor ssim_index(const Tensor &a, const Tensor &b) {
  require_pair(a, b, "ssim_index");
  const std::size_t c = a.dim(0), h = a.dim(1), w = a.dim(2);
  SsimMaps maps = ssim_maps(a.data(), b.data(), c, h, w);
  const double value = maps.mean;
  return detail::make_result(
      Shape{1}, {value}, "ssim", {a, b},
      [maps = std::move(maps), c, h, w](TensorImpl &self) {
        TensorImpl &pa = *self.parents[0];
        TensorImpl &pb = *self.parents[1];
        const double g = self.grad[0];
        if (pa.requires_grad) {
          const auto da = ssim_grad_a(maps, pa.data, pb.data);
          auto &ga = pa.grad_ref();
          for (std::size_t i = 0; i < da.size(); ++i) ga[i] += g * da[i];
        }
        if (pb.requires_grad) {
          // SSIM is symmetric, so the gradient in b is the a-gradient with
          // the roles exchanged.
          const SsimMaps swapped = ssim_maps(pb.data, pa.data, c, h, w);
          const auto db = ssim_grad_a(swapped, pb.data, pa.data);
          auto &gb = pb.grad_ref();
          for (std::size_t i = 0; i < db.size(); ++i) gb[i] += g * db[i];
        }
      });
}

Tensor l1_loss(const Tensor &a, const Tensor &b) {
  return mean(abs(sub(a, b)));
}

PerceptualNet::PerceptualNet(std::uint64_t seed) {
  Rng rng(seed);
  layers_[0] = ConvLayer::init(3, 8, 3, 1, Padding2d::uniform(1), rng);
  layers_[1] = ConvLayer::init(8, 16, 3, 1, Padding2d::uniform(1), rng);
  layers_[2] = ConvLayer::init(16, 16, 3, 1, Padding2d::uniform(1), rng);
  for (ConvLayer &l : layers_) {
    l.weight.set_requires_grad(false);
    l.bias.set_requires_grad(false);
  }
}

Tensor PerceptualNet::features(const Tensor &image) const {
  Tensor x = image;
  for (const ConvLayer &l : layers_) {
    x = relu(l(x));
  }
  return x;
}

Tensor PerceptualNet::distance(const Tensor &a, const Tensor &b) const {
  return mean(square(sub(features(a), features(b))));
}

LossTerms composite_loss_terms(const Tensor &pred, const Tensor &target,
                               const LossWeights &weights,
                               const PerceptualNet *net) {
  require_pair(pred, target, "composite_loss");
  LossTerms terms;
  const Tensor l1 = l1_loss(pred, target);
  terms.l1 = l1.item();
  Tensor total = scale(l1, weights.l1);

  const Tensor s = ssim_index(pred, target);
  terms.ssim_term = 1.0 - s.item();
  if (weights.ssim != 0.0) {
    total = add(total, scale(add_scalar(neg(s), 1.0), weights.ssim));
  }
  if (weights.perceptual != 0.0) {
    static const PerceptualNet shared;
    const Tensor p = (net != nullptr ? net : &shared)->distance(pred, target);
    terms.perceptual = p.item();
    total = add(total, scale(p, weights.perceptual));
  }
  terms.total = total;
  return terms;
}

} // namespace urwkv
