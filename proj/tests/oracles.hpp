// SPDX-License-Identifier: Apache-2.0
//
// Independent reference implementations used by the tests. Nothing here
// calls into the code under test except Tensor storage accessors.

#ifndef URWKV_TESTS_ORACLES_HPP
#define URWKV_TESTS_ORACLES_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "urwkv/tensor.hpp"

namespace oracle {

using urwkv::Shape;
using urwkv::Tensor;

inline Tensor random_tensor(Shape shape, std::mt19937_64 &rng, double lo = -1.0,
                            double hi = 1.0, bool requires_grad = true) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(urwkv::shape_numel(shape));
  for (double &x : v) x = u(rng);
  return Tensor::from(std::move(shape), std::move(v), requires_grad);
}

/// Norm-wise relative error between autodiff and central-difference
/// gradients of a scalar function, over all given inputs.
inline double gradcheck(const std::function<Tensor()> &f,
                        std::vector<Tensor> inputs, double h = 1e-5) {
  for (Tensor &t : inputs) t.zero_grad();
  Tensor out = f();
  out.backward();
  double diff = 0.0, na = 0.0, nn = 0.0;
  for (Tensor &t : inputs) {
    std::vector<double> analytic(t.numel(), 0.0);
    if (t.has_grad()) {
      std::copy(t.grad().begin(), t.grad().end(), analytic.begin());
    }
    auto data = t.mutable_data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double saved = data[i];
      data[i] = saved + h;
      const double fp = f().item();
      data[i] = saved - h;
      const double fm = f().item();
      data[i] = saved;
      const double numeric = (fp - fm) / (2.0 * h);
      diff += (numeric - analytic[i]) * (numeric - analytic[i]);
      na += analytic[i] * analytic[i];
      nn += numeric * numeric;
    }
  }
  const double scale = std::max(std::sqrt(std::max(na, nn)), 1e-12);
  return std::sqrt(diff) / scale;
}

/// Direct O(T^2) bidirectional WKV on row-major T x C buffers.
inline std::vector<double> bi_wkv_naive(const std::vector<double> &k,
                                        const std::vector<double> &v,
                                        const std::vector<double> &w,
                                        const std::vector<double> &u,
                                        std::size_t T, std::size_t C) {
  std::vector<double> out(T * C);
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t t = 0; t < T; ++t) {
      double num = 0.0, den = 0.0;
      for (std::size_t i = 0; i < T; ++i) {
        double e;
        if (i == t) {
          e = std::exp(u[c] + k[i * C + c]);
        } else {
          const double dist =
              std::abs(static_cast<double>(t) - static_cast<double>(i)) - 1.0;
          e = std::exp(-dist * std::abs(w[c]) / static_cast<double>(T) +
                       k[i * C + c]);
        }
        num += e * v[i * C + c];
        den += e;
      }
      out[t * C + c] = num / den;
    }
  }
  return out;
}

/// Per-pixel LayerNorm across channels of a C x H x W buffer.
inline std::vector<double> layer_norm(const std::vector<double> &x,
                                      std::size_t C, std::size_t H,
                                      std::size_t W,
                                      const std::vector<double> &gamma,
                                      const std::vector<double> &beta,
                                      double eps) {
  std::vector<double> out(x.size());
  const std::size_t plane = H * W;
  for (std::size_t p = 0; p < plane; ++p) {
    double mean = 0.0;
    for (std::size_t c = 0; c < C; ++c) mean += x[c * plane + p];
    mean /= static_cast<double>(C);
    double var = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
      const double d = x[c * plane + p] - mean;
      var += d * d;
    }
    var /= static_cast<double>(C);
    for (std::size_t c = 0; c < C; ++c) {
      out[c * plane + p] =
          gamma[c] * (x[c * plane + p] - mean) / std::sqrt(var + eps) + beta[c];
    }
  }
  return out;
}

/// Closed-form EMA of states s_1..s_t: (1-a)^{t-1} s_1 + sum_{i>=2}
/// a (1-a)^{t-i} s_i.
inline std::vector<double> ema_closed_form(
    const std::vector<std::vector<double>> &states, double a) {
  const std::size_t t = states.size();
  std::vector<double> out(states[0].size(), 0.0);
  for (std::size_t i = 1; i <= t; ++i) {
    const double coeff = i == 1 ? std::pow(1.0 - a, static_cast<double>(t - 1))
                                : a * std::pow(1.0 - a, static_cast<double>(t - i));
    for (std::size_t j = 0; j < out.size(); ++j) {
      out[j] += coeff * states[i - 1][j];
    }
  }
  return out;
}

inline double mse(const std::vector<double> &a, const std::vector<double> &b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    s += (a[i] - b[i]) * (a[i] - b[i]);
  }
  return s / static_cast<double>(a.size());
}

/// SSIM with an explicit 11 x 11 Gaussian window evaluated at every valid
/// position, averaged over positions and channels.
inline double ssim_bruteforce(const std::vector<double> &a,
                              const std::vector<double> &b, std::size_t C,
                              std::size_t H, std::size_t W) {
  const int K = 11;
  const double sigma = 1.5;
  double win[K][K];
  double total = 0.0;
  for (int i = 0; i < K; ++i) {
    for (int j = 0; j < K; ++j) {
      const double dy = i - 5, dx = j - 5;
      win[i][j] = std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma));
      total += win[i][j];
    }
  }
  for (auto &row : win)
    for (double &v : row) v /= total;
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double acc = 0.0;
  std::size_t n = 0;
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t y = 0; y + K <= H; ++y) {
      for (std::size_t x = 0; x + K <= W; ++x) {
        double ma = 0, mb = 0;
        for (int i = 0; i < K; ++i)
          for (int j = 0; j < K; ++j) {
            const std::size_t idx = c * H * W + (y + i) * W + (x + j);
            ma += win[i][j] * a[idx];
            mb += win[i][j] * b[idx];
          }
        double va = 0, vb = 0, cov = 0;
        for (int i = 0; i < K; ++i)
          for (int j = 0; j < K; ++j) {
            const std::size_t idx = c * H * W + (y + i) * W + (x + j);
            va += win[i][j] * (a[idx] - ma) * (a[idx] - ma);
            vb += win[i][j] * (b[idx] - mb) * (b[idx] - mb);
            cov += win[i][j] * (a[idx] - ma) * (b[idx] - mb);
          }
        acc += (2 * ma * mb + c1) * (2 * cov + c2) /
               ((ma * ma + mb * mb + c1) * (va + vb + c2));
        ++n;
      }
    }
  }
  return acc / static_cast<double>(n);
}

inline std::vector<double> values(const Tensor &t) {
  return {t.data().begin(), t.data().end()};
}

} // namespace oracle

#endif // URWKV_TESTS_ORACLES_HPP
