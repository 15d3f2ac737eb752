// SPDX-License-Identifier: Apache-2.0

#ifndef URWKV_PARAMS_HPP
#define URWKV_PARAMS_HPP

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "urwkv/tensor.hpp"

namespace urwkv {

/// Ordered (name, parameter) pairs; order is the checkpoint order.
using ParamList = std::vector<std::pair<std::string, Tensor>>;

using Rng = std::mt19937_64;

/// Uniform(-bound, bound) leaf that requires grad.
Tensor uniform_param(Shape shape, double bound, Rng &rng);
Tensor constant_param(Shape shape, double value);

/// Linear projection stored as in x out so that tokens (T x in) @ W.
Tensor linear_weight(std::size_t in, std::size_t out, Rng &rng,
                     double gain = 1.0);
Tensor conv_weight(std::size_t cout, std::size_t cin, std::size_t kh,
                   std::size_t kw, Rng &rng, double gain = 1.0);
Tensor conv_bias(std::size_t cout, std::size_t fan_in, Rng &rng);

std::size_t count_elements(const ParamList &params);

} // namespace urwkv

#endif // URWKV_PARAMS_HPP
