// SPDX-License-Identifier: Apache-2.0

#include "urwkv/image.hpp"

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <cmath>
#include <fstream>
#include <vector>

namespace urwkv {

namespace {

void require_image(const Tensor &x, const char *what) {
  if (!x.defined() || x.ndim() != 3) {
    throw ImageError(std::string(what) + " expects a C x H x W tensor");
  }
}

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

// Reads the next whitespace-separated header token, skipping comments.
std::string next_token(std::istream &in) {
  std::string tok;
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (std::isspace(c)) {
      if (!tok.empty()) break;
    } else {
      tok.push_back(static_cast<char>(c));
    }
    c = in.get();
  }
  return tok;
}

} // namespace

Tensor read_ppm(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ImageError("cannot open image " + path);
  }
  if (next_token(in) != "P6") {
    throw ImageError(path + " is not a binary PPM (P6)");
  }
  std::size_t w = 0, h = 0, maxval = 0;
  try {
    w = std::stoul(next_token(in));
    h = std::stoul(next_token(in));
    maxval = std::stoul(next_token(in));
  } catch (const std::exception &) {
    throw ImageError(path + ": malformed PPM header");
  }
  if (w == 0 || h == 0 || maxval != 255) {
    throw ImageError(path + ": unsupported PPM (need maxval 255, nonzero size)");
  }
  std::vector<unsigned char> raw(3 * w * h);
  in.read(reinterpret_cast<char *>(raw.data()),
          static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size())) {
    throw ImageError(path + ": truncated pixel data");
  }
  std::vector<double> data(raw.size());
  const std::size_t plane = h * w;
  for (std::size_t p = 0; p < plane; ++p) {
    for (std::size_t c = 0; c < 3; ++c) {
      data[c * plane + p] = raw[3 * p + c] / 255.0;
    }
  }
  return Tensor::from({3, h, w}, std::move(data));
}

void write_ppm(const std::string &path, const Tensor &image) {
  require_image(image, "write_ppm");
  if (image.dim(0) != 3) {
    throw ImageError("write_ppm needs 3 channels, got " +
                     shape_str(image.shape()));
  }
  const std::size_t h = image.dim(1);
  const std::size_t w = image.dim(2);
  const std::size_t plane = h * w;
  const auto src = image.data();
  std::vector<unsigned char> raw(3 * plane);
  for (std::size_t p = 0; p < plane; ++p) {
    for (std::size_t c = 0; c < 3; ++c) {
      raw[3 * p + c] = to_byte(src[c * plane + p]);
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw ImageError("cannot write image " + path);
  }
  out << "P6\n" << w << " " << h << "\n255\n";
  out.write(reinterpret_cast<const char *>(raw.data()),
            static_cast<std::streamsize>(raw.size()));
  if (!out) {
    throw ImageError("short write to " + path);
  }
}

Tensor quantize8(const Tensor &image) {
  std::vector<double> data(image.data().begin(), image.data().end());
  for (double &v : data) {
    v = to_byte(v) / 255.0;
  }
  return Tensor::from(image.shape(), std::move(data));
}

Tensor flip_horizontal(const Tensor &image) {
  require_image(image, "flip_horizontal");
  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  const auto src = image.data();
  std::vector<double> out(src.size());
  for (std::size_t k = 0; k < c * h; ++k) {
    for (std::size_t j = 0; j < w; ++j) {
      out[k * w + j] = src[k * w + (w - 1 - j)];
    }
  }
  return Tensor::from(image.shape(), std::move(out));
}

Tensor flip_vertical(const Tensor &image) {
  require_image(image, "flip_vertical");
  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  const auto src = image.data();
  std::vector<double> out(src.size());
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t i = 0; i < h; ++i) {
      std::copy_n(src.begin() + (ch * h + (h - 1 - i)) * w, w,
                  out.begin() + (ch * h + i) * w);
    }
  }
  return Tensor::from(image.shape(), std::move(out));
}

Tensor rot90(const Tensor &image, int k) {
  require_image(image, "rot90");
  k = ((k % 4) + 4) % 4;
  Tensor x = image;
  for (int r = 0; r < k; ++r) {
    // out[i][j] = in[j][w - 1 - i], out is w x h
    const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
    const auto src = x.data();
    std::vector<double> out(src.size());
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t i = 0; i < w; ++i) {
        for (std::size_t j = 0; j < h; ++j) {
          out[(ch * w + i) * h + j] = src[(ch * h + j) * w + (w - 1 - i)];
        }
      }
    }
    x = Tensor::from({c, w, h}, std::move(out));
  }
  return k == 0 ? image.clone() : x;
}

Tensor crop_region(const Tensor &image, std::size_t top, std::size_t left,
                   std::size_t h, std::size_t w) {
  require_image(image, "crop_region");
  const std::size_t c = image.dim(0), ih = image.dim(1), iw = image.dim(2);
  if (h == 0 || w == 0 || top + h > ih || left + w > iw) {
    throw ImageError("crop window exceeds image " + shape_str(image.shape()));
  }
  const auto src = image.data();
  std::vector<double> out(c * h * w);
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t i = 0; i < h; ++i) {
      std::copy_n(src.begin() + (ch * ih + top + i) * iw + left, w,
                  out.begin() + (ch * h + i) * w);
    }
  }
  return Tensor::from({c, h, w}, std::move(out));
}

} // namespace urwkv
