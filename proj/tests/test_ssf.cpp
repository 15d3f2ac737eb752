// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <array>
#include <cmath>

#include "gradient_cases.hpp"
#include "oracles.hpp"
#include "urwkv/ops.hpp"
#include "urwkv/ssf.hpp"

using namespace urwkv;
using oracle::random_tensor;

TEST_CASE("align_to picks identity, pooling or bilinear") {
  std::mt19937_64 rng(1);
  const Tensor x = random_tensor({2, 8, 8}, rng, -1, 1, false);
  CHECK(align_to(x, 8, 8).impl() == x.impl());
  const Tensor pooled = align_to(x, 2, 2);
  const Tensor ref = avg_pool2d(x, 4);
  for (std::size_t i = 0; i < ref.numel(); ++i)
    CHECK(pooled.data()[i] == ref.data()[i]);
  CHECK(align_to(x, 16, 16).shape() == Shape{2, 16, 16});
  CHECK(align_to(x, 5, 3).shape() == Shape{2, 5, 3});
}

TEST_CASE("align_states stacks channel means in stage order") {
  std::mt19937_64 rng(2);
  const std::array<Tensor, 3> states = {
      Tensor::full({4, 8, 8}, 1.0), Tensor::full({8, 4, 4}, 2.0),
      Tensor::full({16, 2, 2}, 3.0)};
  const Tensor a = align_states(states, 4, 4);
  CHECK(a.shape() == Shape{3, 4, 4});
  CHECK(a.data()[0] == doctest::Approx(1.0));
  CHECK(a.data()[16] == doctest::Approx(2.0));
  CHECK(a.data()[47] == doctest::Approx(3.0));
  const std::array<Tensor, 2> two = {states[0], states[1]};
  CHECK_THROWS(align_states(two, 4, 4));
  const std::array<Tensor, 3> missing = {states[0], Tensor(), states[2]};
  CHECK_THROWS(align_states(missing, 4, 4));
}

TEST_CASE("gate lies strictly inside (0, 1)") {
  std::mt19937_64 rng(3);
  Rng init(4);
  SsfParams p = SsfParams::init(4, init);
  p.fuse_w = random_tensor(p.fuse_w.shape(), rng, -20, 20);
  const Tensor g = predict_gate(random_tensor({3, 6, 5}, rng, -2, 2, false), p);
  CHECK(g.shape() == Shape{1, 6, 5});
  for (double v : g.data()) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
  CHECK_THROWS(predict_gate(Tensor::zeros({2, 4, 4}), p));
}

TEST_CASE("fuse_skip gates the encoder feature before projection") {
  std::mt19937_64 rng(5);
  Rng init(6);
  const SkipProjection proj = SkipProjection::init(8, 4, init);
  const Tensor d = random_tensor({4, 3, 3}, rng, -1, 1, false);
  const Tensor e = random_tensor({4, 3, 3}, rng, -1, 1, false);
  // A zero gate equals fusing with an all-zero encoder feature.
  const Tensor zero_gate = Tensor::zeros({1, 3, 3});
  const Tensor a = fuse_skip(d, e, zero_gate, proj);
  const Tensor b = fuse_skip(d, Tensor::zeros({4, 3, 3}), Tensor(), proj);
  for (std::size_t i = 0; i < a.numel(); ++i)
    CHECK(a.data()[i] == doctest::Approx(b.data()[i]));
  // A unit gate is plain concatenation.
  const Tensor c = fuse_skip(d, e, Tensor::full({1, 3, 3}, 1.0), proj);
  const Tensor n = fuse_skip(d, e, Tensor(), proj);
  for (std::size_t i = 0; i < c.numel(); ++i)
    CHECK(c.data()[i] == doctest::Approx(n.data()[i]));
  CHECK_THROWS(fuse_skip(d, Tensor::zeros({4, 2, 3}), Tensor(), proj));
}

TEST_CASE("SSF gradients match central differences") {
  CHECK(gradcase::predict_gate_case() < 1e-4);
  CHECK(gradcase::fuse_skip_case() < 1e-4);
}
