// SPDX-License-Identifier: Apache-2.0

#include "urwkv/params.hpp"

#include <cmath>

namespace urwkv {

Tensor uniform_param(Shape shape, double bound, Rng &rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> values(shape_numel(shape));
  for (double &v : values) {
    v = dist(rng);
  }
  return Tensor::from(std::move(shape), std::move(values), true);
}

Tensor constant_param(Shape shape, double value) {
  return Tensor::full(std::move(shape), value, true);
}

Tensor linear_weight(std::size_t in, std::size_t out, Rng &rng, double gain) {
  return uniform_param({in, out}, gain / std::sqrt(static_cast<double>(in)),
                       rng);
}

Tensor conv_weight(std::size_t cout, std::size_t cin, std::size_t kh,
                   std::size_t kw, Rng &rng, double gain) {
  const double fan_in = static_cast<double>(cin * kh * kw);
  return uniform_param({cout, cin, kh, kw}, gain / std::sqrt(fan_in), rng);
}

Tensor conv_bias(std::size_t cout, std::size_t fan_in, Rng &rng) {
  return uniform_param({cout}, 1.0 / std::sqrt(static_cast<double>(fan_in)),
                       rng);
}

std::size_t count_elements(const ParamList &params) {
  std::size_t n = 0;
  for (const auto &[name, t] : params) {
    n += t.numel();
  }
  return n;
}

} // namespace urwkv
