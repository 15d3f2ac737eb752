// SPDX-License-Identifier: Apache-2.0
/**
 * @file   metrics.hpp
 * @brief  Full-reference quality metrics in RGB: MSE, PSNR and SSIM.
 *
 * SSIM uses an 11 x 11 Gaussian window (sigma 1.5), K1 = 0.01, K2 = 0.03,
 * dynamic range 1, valid window positions only, averaged over positions and
 * channels. Images need H, W >= 11.
 */

#ifndef URWKV_METRICS_HPP
#define URWKV_METRICS_HPP

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "urwkv/tensor.hpp"

namespace urwkv {

inline constexpr double kPsnrCap = 100.0;
inline constexpr std::size_t kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;

double mse(const Tensor &a, const Tensor &b);
/// 10 log10(1 / MSE), capped at kPsnrCap (also returned for MSE = 0).
double psnr(const Tensor &a, const Tensor &b);
double ssim(const Tensor &a, const Tensor &b);

/// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
const std::array<double, kSsimWindow> &ssim_taps();

/// Per-position filtered moments and SSIM values for C x H x W inputs. Shared
/// by the metric and the differentiable loss.
struct SsimMaps {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t out_h = 0;
  std::size_t out_w = 0;
  std::vector<double> mu_a, mu_b, e_aa, e_bb, e_ab, value;
  double mean = 0.0;
};

SsimMaps ssim_maps(std::span<const double> a, std::span<const double> b,
                   std::size_t channels, std::size_t height,
                   std::size_t width);

/// d mean-SSIM / d a, laid out like a.
std::vector<double> ssim_grad_a(const SsimMaps &maps,
                                std::span<const double> a,
                                std::span<const double> b);

} // namespace urwkv

#endif // URWKV_METRICS_HPP
