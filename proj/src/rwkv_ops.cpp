// SPDX-License-Identifier: Apache-2.0

#include "urwkv/rwkv_ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "urwkv/ops.hpp"

namespace urwkv {

using detail::make_result;
using detail::TensorImpl;

Tensor q_shift(const Tensor &x) {
  if (x.ndim() != 3) {
    throw std::invalid_argument("q_shift expects C x H x W, got " +
                                shape_str(x.shape()));
  }
  const std::size_t c = x.dim(0);
  const std::size_t h = x.dim(1);
  const std::size_t w = x.dim(2);
  if (c % 4 != 0) {
    throw std::invalid_argument("q_shift needs channels divisible by 4, got " +
                                std::to_string(c));
  }
  const std::size_t quarter = c / 4;
  const std::size_t plane = h * w;
  // Source offset for each output pixel of each quarter, or npos for zero.
  constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> src(4 * plane, kNone);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t xx = 0; xx < w; ++xx) {
      const std::size_t p = y * w + xx;
      if (xx > 0) src[0 * plane + p] = p - 1;
      if (xx + 1 < w) src[1 * plane + p] = p + 1;
      if (y > 0) src[2 * plane + p] = p - w;
      if (y + 1 < h) src[3 * plane + p] = p + w;
    }
  }
  const auto xd = x.data();
  std::vector<double> out(c * plane, 0.0);
  for (std::size_t ch = 0; ch < c; ++ch) {
    const std::size_t *map = src.data() + (ch / quarter) * plane;
    for (std::size_t p = 0; p < plane; ++p) {
      if (map[p] != kNone) {
        out[ch * plane + p] = xd[ch * plane + map[p]];
      }
    }
  }
  return make_result(x.shape(), std::move(out), "q_shift", {x},
                     [c, quarter, plane, src = std::move(src)](TensorImpl &self) {
                       auto &gp = self.parents[0]->grad_ref();
                       for (std::size_t ch = 0; ch < c; ++ch) {
                         const std::size_t *map =
                             src.data() + (ch / quarter) * plane;
                         for (std::size_t p = 0; p < plane; ++p) {
                           if (map[p] != kNone) {
                             gp[ch * plane + map[p]] +=
                                 self.grad[ch * plane + p];
                           }
                         }
                       }
                     });
}

IntraStateEMA::IntraStateEMA(double alpha) : alpha_(alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw std::invalid_argument("EMA decay alpha must lie in [0, 1]");
  }
}

Tensor IntraStateEMA::absorb(const Tensor &x) {
  if (count_ == 0) {
    aggregate_ = x;
  } else {
    if (x.shape() != aggregate_.shape()) {
      throw std::invalid_argument("msa_absorb: state " + shape_str(x.shape()) +
                                  " does not match aggregate " +
                                  shape_str(aggregate_.shape()));
    }
    aggregate_ = add(scale(x, alpha_), scale(aggregate_, 1.0 - alpha_));
  }
  ++count_;
  return aggregate_;
}

void IntraStateEMA::reset() {
  count_ = 0;
  aggregate_ = Tensor();
}

Tensor sq_shift(const Tensor &x_lan, IntraStateEMA &ema) {
  return q_shift(msa_absorb(ema, x_lan));
}

StateAggregation parse_aggregation(const std::string &name) {
  if (name == "none") return StateAggregation::kNone;
  if (name == "single") return StateAggregation::kSingle;
  if (name == "multi") return StateAggregation::kMulti;
  throw std::invalid_argument("unknown state aggregation '" + name +
                              "' (expected none, single or multi)");
}

std::string to_string(StateAggregation aggregation) {
  switch (aggregation) {
  case StateAggregation::kNone:
    return "none";
  case StateAggregation::kSingle:
    return "single";
  case StateAggregation::kMulti:
    return "multi";
  }
  return "multi";
}

TokenShifter::TokenShifter(TokenShiftMode mode, double alpha)
    : mode_(mode), ema_(alpha) {}

Tensor TokenShifter::operator()(const Tensor &x, ForwardTrace *trace) {
  Tensor mixed;
  switch (mode_.aggregation) {
  case StateAggregation::kMulti:
    mixed = ema_.absorb(x);
    if (trace) ++trace->multi_state_absorbs;
    break;
  case StateAggregation::kSingle:
    if (previous_.defined()) {
      if (previous_.shape() != x.shape()) {
        throw std::invalid_argument("single-state shift: shape changed from " +
                                    shape_str(previous_.shape()) + " to " +
                                    shape_str(x.shape()));
      }
      const double a = ema_.alpha();
      mixed = add(scale(x, a), scale(previous_, 1.0 - a));
    } else {
      mixed = x;
    }
    previous_ = x;
    if (trace) ++trace->single_state_mixes;
    break;
  case StateAggregation::kNone:
    mixed = x;
    if (trace) ++trace->no_aggregation;
    break;
  }
  if (mode_.qshift) {
    if (trace) ++trace->qshift_calls;
    return q_shift(mixed);
  }
  if (trace) ++trace->shift_skipped;
  return mixed;
}

void TokenShifter::reset() {
  ema_.reset();
  previous_ = Tensor();
}

Tensor bi_wkv(const Tensor &k, const Tensor &v, const BiWkvParams &params) {
  if (k.ndim() != 2 || k.shape() != v.shape()) {
    throw std::invalid_argument("bi_wkv: k " + shape_str(k.shape()) +
                                " and v " + shape_str(v.shape()) +
                                " must be equal T x C");
  }
  const std::size_t tokens = k.dim(0);
  const std::size_t c = k.dim(1);
  if (params.w.shape() != Shape{c} || params.u.shape() != Shape{c}) {
    throw std::invalid_argument("bi_wkv: w/u must have shape [" +
                                std::to_string(c) + "]");
  }
  const auto kd = k.data();
  const auto vd = v.data();
  const auto wd = params.w.data();
  const auto ud = params.u.data();
  const double inv_t = 1.0 / static_cast<double>(tokens);

  // Per-channel shift so that every exponent is <= 0.
  std::vector<double> kmax(c, -std::numeric_limits<double>::infinity());
  for (std::size_t t = 0; t < tokens; ++t) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      kmax[ch] = std::max(kmax[ch], kd[t * c + ch]);
    }
  }
  std::vector<double> decay(c);
  std::vector<double> shift(c);
  for (std::size_t ch = 0; ch < c; ++ch) {
    decay[ch] = std::exp(-std::fabs(wd[ch]) * inv_t);
    shift[ch] = kmax[ch] + std::max(ud[ch], 0.0);
  }
  const std::size_t n = tokens * c;
  std::vector<double> e(n);
  std::vector<double> s(n);
  for (std::size_t t = 0; t < tokens; ++t) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t i = t * c + ch;
      e[i] = std::exp(kd[i] - shift[ch]);
      s[i] = std::exp(ud[ch] + kd[i] - shift[ch]);
    }
  }
  std::vector<double> num(n);
  std::vector<double> den(n);
  std::vector<double> acc_num(c, 0.0);
  std::vector<double> acc_den(c, 0.0);
  for (std::size_t t = 0; t < tokens; ++t) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t i = t * c + ch;
      num[i] = acc_num[ch];
      den[i] = acc_den[ch];
      acc_num[ch] = decay[ch] * acc_num[ch] + e[i] * vd[i];
      acc_den[ch] = decay[ch] * acc_den[ch] + e[i];
    }
  }
  std::fill(acc_num.begin(), acc_num.end(), 0.0);
  std::fill(acc_den.begin(), acc_den.end(), 0.0);
  for (std::size_t t = tokens; t-- > 0;) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t i = t * c + ch;
      num[i] += acc_num[ch] + s[i] * vd[i];
      den[i] += acc_den[ch] + s[i];
      acc_num[ch] = decay[ch] * acc_num[ch] + e[i] * vd[i];
      acc_den[ch] = decay[ch] * acc_den[ch] + e[i];
    }
  }
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = num[i] / den[i];
  }

  return make_result(
      Shape{tokens, c}, std::move(out), "bi_wkv",
      {k, v, params.w, params.u},
      [tokens, c, inv_t, decay = std::move(decay), e = std::move(e),
       s = std::move(s), den = std::move(den)](TensorImpl &self) {
        TensorImpl &pk = *self.parents[0];
        TensorImpl &pv = *self.parents[1];
        TensorImpl &pw = *self.parents[2];
        TensorImpl &pu = *self.parents[3];
        const auto &g = self.grad;
        const auto &y = self.data;
        const auto &vd = pv.data;
        const std::size_t n = tokens * c;

        // dL/dnum and dL/dden per token.
        std::vector<double> p(n);
        std::vector<double> q(n);
        for (std::size_t i = 0; i < n; ++i) {
          p[i] = g[i] / den[i];
          q[i] = -g[i] * y[i] / den[i];
        }
        // Symmetric neighbour sums of p and q with weights r^{|t-i|-1}
        // (sum*) and (|t-i|-1) r^{|t-i|-1} (dist*).
        std::vector<double> sum_p(n, 0.0), sum_q(n, 0.0);
        std::vector<double> dist_p(n, 0.0), dist_q(n, 0.0);
        std::vector<double> ap(c), aq(c), bp(c), bq(c);
        auto sweep = [&](bool forward) {
          std::fill(ap.begin(), ap.end(), 0.0);
          std::fill(aq.begin(), aq.end(), 0.0);
          std::fill(bp.begin(), bp.end(), 0.0);
          std::fill(bq.begin(), bq.end(), 0.0);
          for (std::size_t step = 0; step < tokens; ++step) {
            const std::size_t t = forward ? step : tokens - 1 - step;
            for (std::size_t ch = 0; ch < c; ++ch) {
              const std::size_t i = t * c + ch;
              sum_p[i] += ap[ch];
              sum_q[i] += aq[ch];
              dist_p[i] += bp[ch];
              dist_q[i] += bq[ch];
              const double r = decay[ch];
              bp[ch] = r * (bp[ch] + ap[ch]);
              bq[ch] = r * (bq[ch] + aq[ch]);
              ap[ch] = r * ap[ch] + p[i];
              aq[ch] = r * aq[ch] + q[i];
            }
          }
        };
        sweep(true);
        sweep(false);

        double *gk = pk.requires_grad ? pk.grad_ref().data() : nullptr;
        double *gv = pv.requires_grad ? pv.grad_ref().data() : nullptr;
        std::vector<double> du(c, 0.0);
        std::vector<double> dd(c, 0.0);
        for (std::size_t t = 0; t < tokens; ++t) {
          for (std::size_t ch = 0; ch < c; ++ch) {
            const std::size_t i = t * c + ch;
            const double self_term = s[i] * (p[i] * vd[i] + q[i]);
            if (gv) {
              gv[i] += e[i] * sum_p[i] + s[i] * p[i];
            }
            if (gk) {
              gk[i] += e[i] * (vd[i] * sum_p[i] + sum_q[i]) + self_term;
            }
            du[ch] += self_term;
            dd[ch] -= e[i] * (vd[i] * dist_p[i] + dist_q[i]);
          }
        }
        if (pu.requires_grad) {
          auto &gu = pu.grad_ref();
          for (std::size_t ch = 0; ch < c; ++ch) {
            gu[ch] += du[ch];
          }
        }
        if (pw.requires_grad) {
          auto &gw = pw.grad_ref();
          for (std::size_t ch = 0; ch < c; ++ch) {
            const double w = pw.data[ch];
            const double sign = w > 0.0 ? 1.0 : (w < 0.0 ? -1.0 : 0.0);
            gw[ch] += dd[ch] * sign * inv_t;
          }
        }
      });
}

SpatialMixWeights SpatialMixWeights::init(std::size_t channels, Rng &rng) {
  SpatialMixWeights m;
  m.receptance = linear_weight(channels, channels, rng);
  m.key = linear_weight(channels, channels, rng);
  m.value = linear_weight(channels, channels, rng);
  m.output = linear_weight(channels, channels, rng);
  std::vector<double> w(channels);
  std::vector<double> u(channels, 0.5);
  for (std::size_t ch = 0; ch < channels; ++ch) {
    const double frac =
        channels > 1 ? static_cast<double>(ch) / (channels - 1) : 0.0;
    w[ch] = 0.5 + 7.5 * frac;
  }
  m.wkv.w = Tensor::from({channels}, std::move(w), true);
  m.wkv.u = Tensor::from({channels}, std::move(u), true);
  return m;
}

void SpatialMixWeights::collect(const std::string &prefix,
                                ParamList &out) const {
  out.emplace_back(prefix + "receptance", receptance);
  out.emplace_back(prefix + "key", key);
  out.emplace_back(prefix + "value", value);
  out.emplace_back(prefix + "output", output);
  out.emplace_back(prefix + "decay", wkv.w);
  out.emplace_back(prefix + "first", wkv.u);
}

ChannelMixWeights ChannelMixWeights::init(std::size_t channels,
                                          std::size_t hidden, Rng &rng) {
  ChannelMixWeights m;
  m.receptance = linear_weight(channels, channels, rng);
  m.key = linear_weight(channels, hidden, rng);
  m.value = linear_weight(hidden, channels, rng);
  m.output = linear_weight(channels, channels, rng);
  return m;
}

void ChannelMixWeights::collect(const std::string &prefix,
                                ParamList &out) const {
  out.emplace_back(prefix + "receptance", receptance);
  out.emplace_back(prefix + "key", key);
  out.emplace_back(prefix + "value", value);
  out.emplace_back(prefix + "output", output);
}

Tensor to_tokens(const Tensor &x) {
  if (x.ndim() != 3) {
    throw std::invalid_argument("to_tokens expects C x H x W, got " +
                                shape_str(x.shape()));
  }
  return transpose(reshape(x, {x.dim(0), x.dim(1) * x.dim(2)}));
}

Tensor from_tokens(const Tensor &tokens, std::size_t h, std::size_t w) {
  if (tokens.ndim() != 2 || tokens.dim(0) != h * w) {
    throw std::invalid_argument("from_tokens: " + shape_str(tokens.shape()) +
                                " is not " + std::to_string(h * w) +
                                " tokens");
  }
  return reshape(transpose(tokens), {tokens.dim(1), h, w});
}

Tensor spatial_mix(const Tensor &x, const SpatialMixWeights &weights,
                   TokenShifter &shift, ForwardTrace *trace) {
  const Tensor shifted = shift(x, trace);
  const Tensor tokens = to_tokens(shifted);
  const Tensor r = matmul(tokens, weights.receptance);
  const Tensor k = matmul(tokens, weights.key);
  const Tensor v = matmul(tokens, weights.value);
  const Tensor wkv = bi_wkv(k, v, weights.wkv);
  const Tensor o = matmul(mul(sigmoid(r), wkv), weights.output);
  return from_tokens(o, x.dim(1), x.dim(2));
}

Tensor channel_mix(const Tensor &x, const ChannelMixWeights &weights,
                   TokenShifter &shift, ForwardTrace *trace) {
  const Tensor shifted = shift(x, trace);
  const Tensor tokens = to_tokens(shifted);
  const Tensor r = matmul(tokens, weights.receptance);
  const Tensor k = matmul(tokens, weights.key);
  const Tensor kv = matmul(squared_relu(k), weights.value);
  const Tensor o = matmul(mul(sigmoid(r), kv), weights.output);
  return from_tokens(o, x.dim(1), x.dim(2));
}

} // namespace urwkv
