// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "gradient_cases.hpp"
#include "oracles.hpp"
#include "urwkv/ops.hpp"
#include "urwkv/rwkv_ops.hpp"

using namespace urwkv;
using oracle::random_tensor;

TEST_CASE("q_shift moves each channel quarter one pixel") {
  // 4 channels, 3 x 3, value = 10 * channel + pixel index.
  std::vector<double> v(36);
  for (std::size_t c = 0; c < 4; ++c)
    for (std::size_t p = 0; p < 9; ++p) v[c * 9 + p] = 10.0 * c + p;
  const Tensor out = q_shift(Tensor::from({4, 3, 3}, v));
  const auto o = out.data();
  // Quarter 0 reads the left neighbour; column 0 is zero.
  CHECK(o[0 * 9 + 0] == 0.0);
  CHECK(o[0 * 9 + 1] == 0.0 + 0);
  CHECK(o[0 * 9 + 4] == 3.0);
  // Quarter 1 reads the right neighbour; column 2 is zero.
  CHECK(o[1 * 9 + 0] == 11.0);
  CHECK(o[1 * 9 + 2] == 0.0);
  // Quarter 2 reads the upper neighbour; row 0 is zero.
  CHECK(o[2 * 9 + 1] == 0.0);
  CHECK(o[2 * 9 + 4] == 21.0);
  // Quarter 3 reads the lower neighbour; row 2 is zero.
  CHECK(o[3 * 9 + 4] == 37.0);
  CHECK(o[3 * 9 + 7] == 0.0);
  CHECK_THROWS(q_shift(Tensor::zeros({6, 2, 2})));
}

TEST_CASE("EMA keeps the first state and then blends") {
  IntraStateEMA ema(0.5);
  std::mt19937_64 rng(3);
  const Tensor a = random_tensor({4, 2, 2}, rng, -1, 1, false);
  const Tensor b = random_tensor({4, 2, 2}, rng, -1, 1, false);
  CHECK(ema.absorb(a).data()[3] == a.data()[3]);
  const Tensor agg = ema.absorb(b);
  CHECK(agg.data()[5] == doctest::Approx(0.5 * a.data()[5] + 0.5 * b.data()[5]));
  CHECK(ema.count() == 2);
  CHECK_THROWS(ema.absorb(Tensor::zeros({4, 3, 2})));
  ema.reset();
  CHECK(ema.count() == 0);
  CHECK_THROWS(IntraStateEMA(1.5));
}

TEST_CASE("EMA matches its closed form for every prefix length") {
  std::mt19937_64 rng(4);
  for (double alpha : {0.5, 0.3, 0.9}) {
    std::vector<std::vector<double>> states;
    IntraStateEMA ema(alpha);
    for (int t = 1; t <= 8; ++t) {
      const Tensor s = random_tensor({4, 3, 3}, rng, -2, 2, false);
      states.push_back(oracle::values(s));
      const Tensor agg = ema.absorb(s);
      const auto got = agg.data();
      const auto expect = oracle::ema_closed_form(states, alpha);
      double err = 0.0;
      for (std::size_t i = 0; i < expect.size(); ++i)
        err = std::max(err, std::abs(got[i] - expect[i]));
      CHECK(err < 1e-12);
    }
  }
}

TEST_CASE("bi_wkv equals the quadratic formula") {
  std::mt19937_64 rng(5);
  for (std::size_t T : {1, 2, 3, 4, 16, 64}) {
    const std::size_t C = 5;
    const Tensor k = random_tensor({T, C}, rng, -3, 3, false);
    const Tensor v = random_tensor({T, C}, rng, -1, 1, false);
    const BiWkvParams p{random_tensor({C}, rng, -8, 8, false),
                        random_tensor({C}, rng, -2, 2, false)};
    const auto expect =
        oracle::bi_wkv_naive(oracle::values(k), oracle::values(v),
                             oracle::values(p.w), oracle::values(p.u), T, C);
    const Tensor out = bi_wkv(k, v, p);
    const auto got = out.data();
    double err = 0.0;
    for (std::size_t i = 0; i < expect.size(); ++i)
      err = std::max(err, std::abs(got[i] - expect[i]));
    CHECK(err < 1e-10);
  }
}

TEST_CASE("bi_wkv of one token returns v exactly") {
  std::mt19937_64 rng(6);
  const Tensor k = random_tensor({1, 4}, rng, -5, 5, false);
  const Tensor v = random_tensor({1, 4}, rng, -5, 5, false);
  const BiWkvParams p{random_tensor({4}, rng, -3, 3, false),
                      random_tensor({4}, rng, -3, 3, false)};
  const Tensor out = bi_wkv(k, v, p);
  for (std::size_t i = 0; i < 4; ++i) CHECK(out.data()[i] == v.data()[i]);
}

TEST_CASE("bi_wkv stays finite for large keys") {
  std::mt19937_64 rng(7);
  Tensor k = random_tensor({32, 3}, rng, 600, 800, false);
  const Tensor v = random_tensor({32, 3}, rng, -1, 1, false);
  const BiWkvParams p{Tensor::full({3}, 2.0), Tensor::full({3}, 300.0)};
  const Tensor out = bi_wkv(k, v, p);
  for (double x : out.data()) CHECK(std::isfinite(x));
}

TEST_CASE("bi_wkv is an average: constant v passes through") {
  std::mt19937_64 rng(8);
  const Tensor k = random_tensor({9, 2}, rng, -2, 2, false);
  const Tensor v = Tensor::full({9, 2}, 0.25);
  const BiWkvParams p{Tensor::full({2}, 3.0), Tensor::full({2}, 0.5)};
  const Tensor out = bi_wkv(k, v, p);
  for (double x : out.data()) CHECK(x == doctest::Approx(0.25));
}

TEST_CASE("custom op gradients match central differences") {
  CHECK(gradcase::q_shift_case() < 1e-4);
  CHECK(gradcase::msa_absorb_case() < 1e-4);
  CHECK(gradcase::bi_wkv_case() < 1e-4);
}

TEST_CASE("token shift variants take the expected paths") {
  std::mt19937_64 rng(9);
  const Tensor a = random_tensor({4, 2, 2}, rng, -1, 1, false);
  const Tensor b = random_tensor({4, 2, 2}, rng, -1, 1, false);
  const Tensor c = random_tensor({4, 2, 2}, rng, -1, 1, false);

  SUBCASE("none without q-shift is the identity") {
    TokenShifter s({StateAggregation::kNone, false}, 0.5);
    ForwardTrace tr;
    CHECK(s(b, &tr).data()[3] == b.data()[3]);
    CHECK(tr.no_aggregation == 1);
    CHECK(tr.shift_skipped == 1);
  }
  SUBCASE("single mixes only the immediately preceding raw state") {
    TokenShifter s({StateAggregation::kSingle, false}, 0.5);
    ForwardTrace tr;
    s(a, &tr);
    s(b, &tr);
    const Tensor out = s(c, &tr);
    CHECK(out.data()[2] == doctest::Approx(0.5 * c.data()[2] + 0.5 * b.data()[2]));
    CHECK(tr.single_state_mixes == 3);
  }
  SUBCASE("multi follows the EMA over all states, then q-shifts") {
    TokenShifter s({StateAggregation::kMulti, true}, 0.5);
    ForwardTrace tr;
    s(a, &tr);
    s(b, &tr);
    const Tensor out = s(c, &tr);
    IntraStateEMA ema(0.5);
    ema.absorb(a);
    ema.absorb(b);
    const Tensor expect = q_shift(ema.absorb(c));
    for (std::size_t i = 0; i < 16; ++i)
      CHECK(out.data()[i] == doctest::Approx(expect.data()[i]));
    CHECK(tr.multi_state_absorbs == 3);
    CHECK(tr.qshift_calls == 3);
  }
  SUBCASE("reset clears the chain") {
    TokenShifter s({StateAggregation::kMulti, false}, 0.5);
    s(a);
    s.reset();
    CHECK(s(b).data()[0] == b.data()[0]);
  }
}

TEST_CASE("mixing sub-blocks preserve shape and respect zero outputs") {
  Rng rng(10);
  const SpatialMixWeights sw = SpatialMixWeights::init(8, rng);
  const ChannelMixWeights cw = ChannelMixWeights::init(8, 32, rng);
  std::mt19937_64 r2(11);
  const Tensor x = random_tensor({8, 5, 7}, r2, -1, 1, false);
  TokenShifter s1({}, 0.5), s2({}, 0.5);
  CHECK(spatial_mix(x, sw, s1).shape() == x.shape());
  CHECK(channel_mix(x, cw, s2).shape() == x.shape());
  CHECK(from_tokens(to_tokens(x), 5, 7).data()[17] == x.data()[17]);
  CHECK(to_tokens(x).shape() == Shape{35, 8});
}
