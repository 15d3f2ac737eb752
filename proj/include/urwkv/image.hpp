// SPDX-License-Identifier: Apache-2.0
/**
 * @file   image.hpp
 * @brief  Image I/O and geometric transforms on 3 x H x W tensors in [0, 1].
 *
 * These are data-side helpers and do not record autodiff history.
 */

#ifndef URWKV_IMAGE_HPP
#define URWKV_IMAGE_HPP

#include <cstddef>
#include <stdexcept>
#include <string>

#include "urwkv/tensor.hpp"

namespace urwkv {

class ImageError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Binary P6, maxval 255. Values map to [0, 1] by v / 255.
Tensor read_ppm(const std::string &path);
/// Writes lround(clamp(v, 0, 1) * 255).
void write_ppm(const std::string &path, const Tensor &image);

/// Quantizes to the 8-bit grid, as a write/read round trip would.
Tensor quantize8(const Tensor &image);

Tensor flip_horizontal(const Tensor &image);
Tensor flip_vertical(const Tensor &image);
/// Counter-clockwise rotation by k * 90 degrees.
Tensor rot90(const Tensor &image, int k);
Tensor crop_region(const Tensor &image, std::size_t top, std::size_t left,
                   std::size_t h, std::size_t w);

} // namespace urwkv

#endif // URWKV_IMAGE_HPP
