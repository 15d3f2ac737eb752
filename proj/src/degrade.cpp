// SPDX-License-Identifier: Apache-2.0

#include "urwkv/degrade.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>
#include <vector>

namespace urwkv {

using nlohmann::json;

json to_json(const DegradationRecipe &r) {
  return json{{"gamma", r.gamma},
              {"gain", r.gain},
              {"noise_sigma", r.noise_sigma},
              {"blur_length", r.blur_length},
              {"blur_angle", r.blur_angle}};
}

DegradationRecipe recipe_from_json(const json &doc) {
  DegradationRecipe r;
  r.gamma = doc.at("gamma").get<double>();
  r.gain = doc.at("gain").get<double>();
  r.noise_sigma = doc.at("noise_sigma").get<double>();
  r.blur_length = doc.at("blur_length").get<std::size_t>();
  r.blur_angle = doc.at("blur_angle").get<double>();
  return r;
}

DegradationRecipe random_recipe(Rng &rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  DegradationRecipe r;
  r.gamma = 1.5 + 2.0 * unit(rng);
  r.gain = 0.2 + 0.4 * unit(rng);
  r.noise_sigma = 0.08 * unit(rng);
  r.blur_length = std::uniform_int_distribution<std::size_t>(0, 15)(rng);
  r.blur_angle = std::numbers::pi * unit(rng);
  return r;
}

Tensor motion_kernel(std::size_t length, double angle) {
  if (length == 0) {
    return Tensor::from({1, 1}, {1.0});
  }
  const std::size_t half = (length + 1) / 2;
  const std::size_t k = 2 * half + 1;
  std::vector<double> taps(k * k, 0.0);
  const double dx = std::cos(angle);
  const double dy = std::sin(angle);
  // Splat densely sampled points of the centred segment bilinearly.
  const std::size_t samples = 16 * length + 1;
  for (std::size_t s = 0; s < samples; ++s) {
    const double t = (static_cast<double>(s) / (samples - 1) - 0.5) *
                     static_cast<double>(length);
    const double x = static_cast<double>(half) + t * dx;
    const double y = static_cast<double>(half) - t * dy;
    const double x0 = std::floor(x), y0 = std::floor(y);
    const double fx = x - x0, fy = y - y0;
    for (int oy = 0; oy < 2; ++oy) {
      for (int ox = 0; ox < 2; ++ox) {
        const long xi = static_cast<long>(x0) + ox;
        const long yi = static_cast<long>(y0) + oy;
        if (xi < 0 || yi < 0 || xi >= static_cast<long>(k) ||
            yi >= static_cast<long>(k)) {
          continue;
        }
        const double wgt = (ox ? fx : 1.0 - fx) * (oy ? fy : 1.0 - fy);
        taps[static_cast<std::size_t>(yi) * k + static_cast<std::size_t>(xi)] +=
            wgt;
      }
    }
  }
  double total = 0.0;
  for (double v : taps) total += v;
  for (double &v : taps) v /= total;
  return Tensor::from({k, k}, std::move(taps));
}

Tensor apply_blur(const Tensor &image, const Tensor &kernel) {
  if (image.ndim() != 3 || kernel.ndim() != 2 || kernel.dim(0) % 2 == 0 ||
      kernel.dim(0) != kernel.dim(1)) {
    throw std::invalid_argument("apply_blur needs C x H x W and an odd square "
                                "kernel");
  }
  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  const std::size_t k = kernel.dim(0);
  if (k == 1) {
    return image.clone();
  }
  const long r = static_cast<long>(k / 2);
  const auto src = image.data();
  const auto ker = kernel.data();
  std::vector<double> out(src.size(), 0.0);
  auto clampi = [](long v, long hi) { return std::clamp(v, 0L, hi - 1); };
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double *plane = src.data() + ch * h * w;
    for (long i = 0; i < static_cast<long>(h); ++i) {
      for (long j = 0; j < static_cast<long>(w); ++j) {
        double acc = 0.0;
        for (long u = -r; u <= r; ++u) {
          const long si = clampi(i + u, static_cast<long>(h));
          for (long v = -r; v <= r; ++v) {
            const long sj = clampi(j + v, static_cast<long>(w));
            acc += ker[static_cast<std::size_t>((u + r) * static_cast<long>(k) +
                                                v + r)] *
                   plane[si * static_cast<long>(w) + sj];
          }
        }
        out[ch * h * w + static_cast<std::size_t>(i) * w +
            static_cast<std::size_t>(j)] = acc;
      }
    }
  }
  return Tensor::from(image.shape(), std::move(out));
}

ImagePair degrade(const Tensor &reference, const DegradationRecipe &recipe,
                  Rng &rng, const std::string &id) {
  std::vector<double> dark(reference.data().begin(), reference.data().end());
  for (double &v : dark) {
    v = recipe.gain * std::pow(std::clamp(v, 0.0, 1.0), recipe.gamma);
  }
  Tensor blurred =
      apply_blur(Tensor::from(reference.shape(), std::move(dark)),
                 motion_kernel(recipe.blur_length, recipe.blur_angle));
  std::vector<double> out(blurred.data().begin(), blurred.data().end());
  if (recipe.noise_sigma > 0.0) {
    std::normal_distribution<double> noise(0.0, recipe.noise_sigma);
    for (double &v : out) {
      v += noise(rng);
    }
  }
  for (double &v : out) {
    v = std::clamp(v, 0.0, 1.0);
  }
  return {id, Tensor::from(reference.shape(), std::move(out)),
          reference.clone()};
}

Tensor synthetic_reference(std::size_t height, std::size_t width, Rng &rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const std::size_t plane = height * width;
  std::vector<double> img(3 * plane);
  const double hh = static_cast<double>(height);
  const double ww = static_cast<double>(width);

  // Background: a colored linear gradient.
  double base[3], slope_y[3], slope_x[3];
  for (int c = 0; c < 3; ++c) {
    base[c] = 0.25 + 0.5 * unit(rng);
    slope_y[c] = 0.4 * (unit(rng) - 0.5);
    slope_x[c] = 0.4 * (unit(rng) - 0.5);
  }
  for (std::size_t i = 0; i < height; ++i) {
    for (std::size_t j = 0; j < width; ++j) {
      for (int c = 0; c < 3; ++c) {
        img[c * plane + i * width + j] =
            base[c] + slope_y[c] * (i / hh - 0.5) + slope_x[c] * (j / ww - 0.5);
      }
    }
  }
  // Flat-colored rectangles and discs.
  const int shapes = 3 + static_cast<int>(unit(rng) * 4);
  for (int s = 0; s < shapes; ++s) {
    const bool disc = unit(rng) < 0.5;
    const double cy = unit(rng) * hh, cx = unit(rng) * ww;
    const double ry = (0.1 + 0.25 * unit(rng)) * hh;
    const double rx = (0.1 + 0.25 * unit(rng)) * ww;
    double color[3];
    for (double &v : color) v = 0.05 + 0.9 * unit(rng);
    for (std::size_t i = 0; i < height; ++i) {
      for (std::size_t j = 0; j < width; ++j) {
        const double y = (i - cy) / ry, x = (j - cx) / rx;
        const bool inside =
            disc ? x * x + y * y <= 1.0 : std::abs(x) <= 1.0 && std::abs(y) <= 1.0;
        if (inside) {
          for (int c = 0; c < 3; ++c) img[c * plane + i * width + j] = color[c];
        }
      }
    }
  }
  // Low-amplitude sinusoidal texture.
  const double fy = 2.0 * std::numbers::pi * (1.0 + 4.0 * unit(rng)) / hh;
  const double fx = 2.0 * std::numbers::pi * (1.0 + 4.0 * unit(rng)) / ww;
  const double phase = 2.0 * std::numbers::pi * unit(rng);
  const double amp = 0.08 * unit(rng);
  for (std::size_t i = 0; i < height; ++i) {
    for (std::size_t j = 0; j < width; ++j) {
      const double t = amp * std::sin(fy * i + fx * j + phase);
      for (int c = 0; c < 3; ++c) {
        double &v = img[c * plane + i * width + j];
        v = std::clamp(v + t, 0.05, 0.95);
      }
    }
  }
  return Tensor::from({3, height, width}, std::move(img));
}

} // namespace urwkv
