// SPDX-License-Identifier: Apache-2.0
/**
 * @file   degrade.hpp
 * @brief  Synthetic coupled degradation: darkening, linear motion blur and
 *         additive Gaussian noise, plus procedural reference images.
 *
 * degraded = clamp(blur(gain * reference^gamma) + N(0, sigma^2), 0, 1)
 */

#ifndef URWKV_DEGRADE_HPP
#define URWKV_DEGRADE_HPP

#include <cstddef>
#include <string>

#include <json.hpp>

#include "urwkv/params.hpp"
#include "urwkv/tensor.hpp"

namespace urwkv {

struct DegradationRecipe {
  double gamma = 1.0;       ///< darkening exponent, sampled in [1.5, 3.5]
  double gain = 1.0;        ///< illumination scale, sampled in [0.2, 0.6]
  double noise_sigma = 0.0; ///< sampled in [0, 0.08]
  std::size_t blur_length = 0; ///< motion length in pixels, 0..15
  double blur_angle = 0.0;     ///< radians in [0, pi)
};

nlohmann::json to_json(const DegradationRecipe &recipe);
DegradationRecipe recipe_from_json(const nlohmann::json &doc);

DegradationRecipe random_recipe(Rng &rng);

/// Normalized k x k line kernel (k odd). Length 0 gives the 1 x 1 identity.
Tensor motion_kernel(std::size_t length, double angle);

/// Per-channel 2-D correlation with edge-replicated borders.
Tensor apply_blur(const Tensor &image, const Tensor &kernel);

struct ImagePair {
  std::string id;
  Tensor degraded;
  Tensor reference;
};

ImagePair degrade(const Tensor &reference, const DegradationRecipe &recipe,
                  Rng &rng, const std::string &id = "");

/// Smooth illumination gradient, shapes and texture in [0.05, 0.95].
Tensor synthetic_reference(std::size_t height, std::size_t width, Rng &rng);

} // namespace urwkv

#endif // URWKV_DEGRADE_HPP
