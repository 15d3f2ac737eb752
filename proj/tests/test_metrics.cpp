// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "gradient_cases.hpp"
#include "oracles.hpp"
#include "urwkv/losses.hpp"
#include "urwkv/metrics.hpp"

using namespace urwkv;
using oracle::random_tensor;

TEST_CASE("PSNR matches the MSE oracle") {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 5; ++i) {
    const Tensor a = random_tensor({3, 9, 7}, rng, 0, 1, false);
    const Tensor b = random_tensor({3, 9, 7}, rng, 0, 1, false);
    const double m = oracle::mse(oracle::values(a), oracle::values(b));
    CHECK(std::abs(mse(a, b) - m) < 1e-15);
    CHECK(std::abs(psnr(a, b) - 10.0 * std::log10(1.0 / m)) < 1e-8);
  }
}

TEST_CASE("PSNR of a uniform 0.1 offset is 20 dB") {
  std::mt19937_64 rng(2);
  const Tensor a = random_tensor({3, 16, 16}, rng, 0, 0.9, false);
  const Tensor b = add_scalar(a, 0.1);
  // Only the rounding of a + 0.1 separates this from exactly 20.
  CHECK(std::abs(psnr(a, b) - 20.0) < 1e-9);
  CHECK(psnr(Tensor::zeros({3, 4, 4}), Tensor::full({3, 4, 4}, 0.1)) ==
        doctest::Approx(20.0).epsilon(1e-14));
}

TEST_CASE("PSNR caps identical images and rejects mismatched shapes") {
  const Tensor a = Tensor::full({3, 4, 4}, 0.3);
  CHECK(psnr(a, a) == kPsnrCap);
  CHECK_THROWS(psnr(a, Tensor::zeros({3, 4, 5})));
}

TEST_CASE("SSIM matches the brute-force window oracle") {
  std::mt19937_64 rng(3);
  for (auto [h, w] : {std::pair<std::size_t, std::size_t>{11, 11}, {16, 13}, {24, 31}}) {
    const Tensor a = random_tensor({3, h, w}, rng, 0, 1, false);
    Tensor b = a.clone();
    for (double &v : b.mutable_data())
      v = std::clamp(v + std::uniform_real_distribution<double>(-0.2, 0.2)(rng), 0.0, 1.0);
    const double ref = oracle::ssim_bruteforce(oracle::values(a),
                                               oracle::values(b), 3, h, w);
    CHECK(std::abs(ssim(a, b) - ref) < 1e-8);
    CHECK(std::abs(ssim(b, a) - ref) < 1e-8);
  }
}

TEST_CASE("SSIM of an image with itself is one") {
  std::mt19937_64 rng(4);
  const Tensor a = random_tensor({3, 20, 20}, rng, 0, 1, false);
  CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(ssim(Tensor::zeros({3, 12, 12}), Tensor::zeros({3, 12, 12})) ==
        doctest::Approx(1.0));
  CHECK_THROWS(ssim(Tensor::zeros({3, 10, 20}), Tensor::zeros({3, 10, 20})));
}

TEST_CASE("Gaussian taps are symmetric and normalized") {
  const auto &t = ssim_taps();
  double total = 0.0;
  for (std::size_t i = 0; i < kSsimWindow; ++i) {
    total += t[i];
    CHECK(t[i] == t[kSsimWindow - 1 - i]);
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("differentiable SSIM agrees with the metric") {
  std::mt19937_64 rng(5);
  const Tensor a = random_tensor({3, 14, 14}, rng, 0, 1, false);
  const Tensor b = random_tensor({3, 14, 14}, rng, 0, 1, false);
  CHECK(ssim_index(a, b).item() == doctest::Approx(ssim(a, b)).epsilon(1e-14));
}

TEST_CASE("composite loss terms and gradients") {
  std::mt19937_64 rng(6);
  const Tensor a = random_tensor({3, 12, 12}, rng, 0, 1, false);
  const Tensor b = random_tensor({3, 12, 12}, rng, 0, 1, false);
  const LossTerms t = composite_loss_terms(a, b, LossWeights{});
  CHECK(t.l1 == doctest::Approx(l1_loss(a, b).item()));
  CHECK(t.ssim_term == doctest::Approx(1.0 - ssim(a, b)));
  CHECK(t.total.item() == doctest::Approx(t.l1 + t.ssim_term));
  CHECK(composite_loss(a, a, LossWeights{}).item() == doctest::Approx(0.0).epsilon(1e-12));
  const PerceptualNet net;
  const LossTerms p = composite_loss_terms(a, b, LossWeights{0.0, 0.0, 1.0}, &net);
  CHECK(p.perceptual > 0.0);
  CHECK(p.total.item() == doctest::Approx(p.perceptual));
  CHECK(gradcase::composite_loss_case() < 1e-4);
}
