// SPDX-License-Identifier: Apache-2.0

#include "urwkv/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace urwkv {

namespace {

constexpr std::size_t kK = kSsimWindow;

void require_same(const Tensor &a, const Tensor &b, const char *what) {
  if (!a.defined() || !b.defined() || a.shape() != b.shape()) {
    throw std::invalid_argument(
        std::string(what) + ": shape mismatch " +
        (a.defined() ? shape_str(a.shape()) : "undefined") + " vs " +
        (b.defined() ? shape_str(b.shape()) : "undefined"));
  }
}

// Valid separable Gaussian filtering of one h x w plane.
void filter_valid(const double *in, std::size_t h, std::size_t w,
                  double *out) {
  const auto &g = ssim_taps();
  const std::size_t oh = h - kK + 1;
  const std::size_t ow = w - kK + 1;
  std::vector<double> tmp(h * ow, 0.0);
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < ow; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < kK; ++k) {
        acc += g[k] * in[i * w + j + k];
      }
      tmp[i * ow + j] = acc;
    }
  }
  for (std::size_t i = 0; i < oh; ++i) {
    for (std::size_t j = 0; j < ow; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < kK; ++k) {
        acc += g[k] * tmp[(i + k) * ow + j];
      }
      out[i * ow + j] = acc;
    }
  }
}

// Adjoint of filter_valid: scatters an oh x ow map back onto h x w.
void filter_adjoint(const double *m, std::size_t h, std::size_t w,
                    double *out) {
  const auto &g = ssim_taps();
  const std::size_t oh = h - kK + 1;
  const std::size_t ow = w - kK + 1;
  std::vector<double> tmp(h * ow, 0.0);
  for (std::size_t i = 0; i < oh; ++i) {
    for (std::size_t k = 0; k < kK; ++k) {
      for (std::size_t j = 0; j < ow; ++j) {
        tmp[(i + k) * ow + j] += g[k] * m[i * ow + j];
      }
    }
  }
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < ow; ++j) {
      for (std::size_t k = 0; k < kK; ++k) {
        out[i * w + j + k] += g[k] * tmp[i * ow + j];
      }
    }
  }
}

} // namespace

const std::array<double, kSsimWindow> &ssim_taps() {
  static const std::array<double, kSsimWindow> taps = [] {
    std::array<double, kSsimWindow> t{};
    double total = 0.0;
    const double centre = (kSsimWindow - 1) / 2.0;
    for (std::size_t i = 0; i < kSsimWindow; ++i) {
      const double d = static_cast<double>(i) - centre;
      t[i] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
      total += t[i];
    }
    for (double &v : t) {
      v /= total;
    }
    return t;
  }();
  return taps;
}

double mse(const Tensor &a, const Tensor &b) {
  require_same(a, b, "mse");
  const auto x = a.data();
  const auto y = b.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - y[i];
    acc += d * d;
  }
  return acc / static_cast<double>(x.size());
}

double psnr(const Tensor &a, const Tensor &b) {
  const double m = mse(a, b);
  if (m <= 0.0) {
    return kPsnrCap;
  }
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / m));
}

SsimMaps ssim_maps(std::span<const double> a, std::span<const double> b,
                   std::size_t channels, std::size_t height,
                   std::size_t width) {
  if (height < kK || width < kK) {
    throw std::invalid_argument("ssim needs H, W >= 11, got " +
                                std::to_string(height) + " x " +
                                std::to_string(width));
  }
  const std::size_t plane = height * width;
  if (a.size() != channels * plane || b.size() != a.size()) {
    throw std::invalid_argument("ssim_maps: buffer size mismatch");
  }
  SsimMaps m;
  m.channels = channels;
  m.height = height;
  m.width = width;
  m.out_h = height - kK + 1;
  m.out_w = width - kK + 1;
  const std::size_t op = m.out_h * m.out_w;
  const std::size_t n = channels * op;
  for (auto *v : {&m.mu_a, &m.mu_b, &m.e_aa, &m.e_bb, &m.e_ab, &m.value}) {
    v->assign(n, 0.0);
  }
  std::vector<double> aa(plane), bb(plane), ab(plane);
  double total = 0.0;
  for (std::size_t c = 0; c < channels; ++c) {
    const double *pa = a.data() + c * plane;
    const double *pb = b.data() + c * plane;
    for (std::size_t i = 0; i < plane; ++i) {
      aa[i] = pa[i] * pa[i];
      bb[i] = pb[i] * pb[i];
      ab[i] = pa[i] * pb[i];
    }
    filter_valid(pa, height, width, m.mu_a.data() + c * op);
    filter_valid(pb, height, width, m.mu_b.data() + c * op);
    filter_valid(aa.data(), height, width, m.e_aa.data() + c * op);
    filter_valid(bb.data(), height, width, m.e_bb.data() + c * op);
    filter_valid(ab.data(), height, width, m.e_ab.data() + c * op);
  }
  for (std::size_t i = 0; i < n; ++i) {
    const double ma = m.mu_a[i], mb = m.mu_b[i];
    const double va = m.e_aa[i] - ma * ma;
    const double vb = m.e_bb[i] - mb * mb;
    const double cov = m.e_ab[i] - ma * mb;
    m.value[i] = (2 * ma * mb + kSsimC1) * (2 * cov + kSsimC2) /
                 ((ma * ma + mb * mb + kSsimC1) * (va + vb + kSsimC2));
    total += m.value[i];
  }
  m.mean = total / static_cast<double>(n);
  return m;
}

std::vector<double> ssim_grad_a(const SsimMaps &m, std::span<const double> a,
                                std::span<const double> b) {
  const std::size_t plane = m.height * m.width;
  const std::size_t op = m.out_h * m.out_w;
  const double inv_n = 1.0 / static_cast<double>(m.channels * op);
  std::vector<double> grad(a.size(), 0.0);
  // Per-position sensitivities to mu_a, E[a^2] and E[ab].
  std::vector<double> d_mu(op), d_aa(op), d_ab(op);
  std::vector<double> g_mu(plane), g_aa(plane), g_ab(plane);
  for (std::size_t c = 0; c < m.channels; ++c) {
    for (std::size_t p = 0; p < op; ++p) {
      const std::size_t i = c * op + p;
      const double ma = m.mu_a[i], mb = m.mu_b[i];
      const double a1 = 2 * ma * mb + kSsimC1;
      const double a2 = 2 * (m.e_ab[i] - ma * mb) + kSsimC2;
      const double b1 = ma * ma + mb * mb + kSsimC1;
      const double b2 = (m.e_aa[i] - ma * ma) + (m.e_bb[i] - mb * mb) + kSsimC2;
      const double s = m.value[i];
      d_mu[p] = inv_n * ((2 * mb * a2 - 2 * mb * a1) / (b1 * b2) -
                         s * (2 * ma / b1 - 2 * ma / b2));
      d_aa[p] = inv_n * (-s / b2);
      d_ab[p] = inv_n * (2 * a1 / (b1 * b2));
    }
    std::fill(g_mu.begin(), g_mu.end(), 0.0);
    std::fill(g_aa.begin(), g_aa.end(), 0.0);
    std::fill(g_ab.begin(), g_ab.end(), 0.0);
    filter_adjoint(d_mu.data(), m.height, m.width, g_mu.data());
    filter_adjoint(d_aa.data(), m.height, m.width, g_aa.data());
    filter_adjoint(d_ab.data(), m.height, m.width, g_ab.data());
    for (std::size_t q = 0; q < plane; ++q) {
      const std::size_t k = c * plane + q;
      grad[k] = g_mu[q] + 2 * a[k] * g_aa[q] + b[k] * g_ab[q];
    }
  }
  return grad;
}

double ssim(const Tensor &a, const Tensor &b) {
  require_same(a, b, "ssim");
  if (a.ndim() != 3) {
    throw std::invalid_argument("ssim expects C x H x W, got " +
                                shape_str(a.shape()));
  }
  return ssim_maps(a.data(), b.data(), a.dim(0), a.dim(1), a.dim(2)).mean;
}

} // namespace urwkv
