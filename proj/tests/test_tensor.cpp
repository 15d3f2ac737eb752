// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "oracles.hpp"
#include "urwkv/ops.hpp"
#include "urwkv/tensor.hpp"

using namespace urwkv;

TEST_CASE("construction rejects bad shapes and sizes") {
  CHECK_THROWS(Tensor::zeros({2, 0}));
  CHECK_THROWS(Tensor::from({2, 2}, {1.0, 2.0, 3.0}));
  const Tensor t = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.numel() == 6);
  CHECK(t.dim(1) == 3);
  CHECK(shape_str(t.shape()) == "[2x3]");
  CHECK_THROWS(t.item());
}

TEST_CASE("backward of a shared subexpression accumulates") {
  Tensor x = Tensor::from({2}, {1.5, -2.0}, true);
  const Tensor y = mul(x, x);     // x^2
  const Tensor z = sum(add(y, x)); // sum(x^2 + x)
  z.backward();
  CHECK(x.grad()[0] == doctest::Approx(2 * 1.5 + 1));
  CHECK(x.grad()[1] == doctest::Approx(2 * -2.0 + 1));
}

TEST_CASE("leaf grads accumulate across backward calls until zero_grad") {
  Tensor x = Tensor::from({1}, {3.0}, true);
  sum(scale(x, 2.0)).backward();
  sum(scale(x, 2.0)).backward();
  CHECK(x.grad()[0] == doctest::Approx(4.0));
  x.zero_grad();
  CHECK_FALSE(x.has_grad());
  CHECK_THROWS(x.grad());
}

TEST_CASE("backward requires a scalar that requires grad") {
  Tensor x = Tensor::from({2}, {1.0, 2.0}, true);
  CHECK_THROWS(scale(x, 2.0).backward());
  const Tensor c = Tensor::from({1}, {1.0});
  CHECK_THROWS(c.backward());
}

TEST_CASE("NoGradGuard suppresses history") {
  Tensor x = Tensor::from({2}, {1.0, 2.0}, true);
  {
    NoGradGuard guard;
    const Tensor y = mul(x, x);
    CHECK_FALSE(y.requires_grad());
    CHECK(y.is_leaf());
  }
  CHECK(mul(x, x).requires_grad());
}

TEST_CASE("tape visits each node once in dependency order") {
  Tensor a = Tensor::from({1}, {2.0}, true);
  const Tensor b = mul(a, a);
  const Tensor c = add(b, b);
  const Tensor d = sum(mul(c, b));
  const ComputationTape tape = ComputationTape::record(d);
  CHECK(tape.size() == 5);
  // The root comes last; the leaf first.
  CHECK(tape.nodes().back() == d.impl());
  CHECK(tape.nodes().front() == a.impl());
}

TEST_CASE("deep chains do not overflow the stack") {
  Tensor x = Tensor::from({1}, {1.0}, true);
  Tensor y = x;
  for (int i = 0; i < 100000; ++i) {
    y = add_scalar(y, 0.0);
  }
  sum(y).backward();
  CHECK(x.grad()[0] == doctest::Approx(1.0));
}

TEST_CASE("broadcast binary ops reduce gradients over broadcast axes") {
  std::mt19937_64 rng(1);
  Tensor a = oracle::random_tensor({3, 4, 5}, rng);
  Tensor b = oracle::random_tensor({3, 1, 1}, rng);
  Tensor c = oracle::random_tensor({5}, rng);
  const Tensor r = oracle::random_tensor({3, 4, 5}, rng, -1, 1, false);
  for (BinaryOp op : {BinaryOp::kAdd, BinaryOp::kSub, BinaryOp::kMul}) {
    const double err = oracle::gradcheck(
        [&] { return sum(mul(elementwise(op, elementwise(op, a, b), c), r)); },
        {a, b, c});
    CHECK(err < 1e-8);
  }
  Tensor pos = oracle::random_tensor({3, 1, 1}, rng, 0.5, 2.0);
  CHECK(oracle::gradcheck([&] { return sum(mul(div(a, pos), r)); },
                          {a, pos}) < 1e-8);
  CHECK_THROWS(add(a, oracle::random_tensor({4, 4}, rng)));
}

TEST_CASE("detach and clone cut history") {
  Tensor x = Tensor::from({2}, {1.0, 2.0}, true);
  const Tensor y = mul(x, x);
  CHECK(y.detach().is_leaf());
  CHECK_FALSE(y.detach().requires_grad());
  const Tensor z = y.clone();
  CHECK(z.data()[1] == 4.0);
}
