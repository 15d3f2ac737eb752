// SPDX-License-Identifier: Apache-2.0

#include "urwkv/lan.hpp"

#include <cmath>
#include <stdexcept>

#include "urwkv/ops.hpp"

namespace urwkv {

namespace {
constexpr double kLanEps = 1e-5;
}

void StageStateRegistry::record(const Tensor &state) {
  if (state.ndim() != 3) {
    throw std::invalid_argument("stage state must be C x H x W, got " +
                                shape_str(state.shape()));
  }
  if (state.dim(0) > c_max_) {
    throw std::invalid_argument("stage state has " +
                                std::to_string(state.dim(0)) +
                                " channels, registry c_max is " +
                                std::to_string(c_max_));
  }
  states_.push_back(state);
}

Tensor luminance_vector(const Tensor &x, std::size_t c_max) {
  if (x.ndim() != 3) {
    throw std::invalid_argument("luminance_vector expects C x H x W, got " +
                                shape_str(x.shape()));
  }
  const std::size_t c = x.dim(0);
  if (c > c_max) {
    throw std::invalid_argument("luminance_vector: " + std::to_string(c) +
                                " channels exceed c_max " +
                                std::to_string(c_max));
  }
  Tensor pooled = spatial_mean(x);
  if (c == c_max) {
    return pooled;
  }
  const Tensor parts[] = {pooled, Tensor::zeros({c_max - c})};
  return concat(parts, 0);
}

LanParams LanParams::init(std::size_t channels, std::size_t num_states,
                          std::size_t c_max, std::size_t hidden,
                          bool modulated, Rng &rng) {
  if (num_states == 0 || channels > c_max) {
    throw std::invalid_argument("LAN needs at least one state and C <= c_max");
  }
  LanParams p;
  p.channels = channels;
  p.num_states = num_states;
  p.c_max = c_max;
  p.modulated = modulated;
  p.gamma = constant_param({channels}, 1.0);
  p.beta = constant_param({channels}, 0.0);
  if (!modulated) {
    return p;
  }
  const std::size_t t = num_states;
  for (std::size_t i = 0; i < kKernelWidths.size(); ++i) {
    const std::size_t r = kKernelWidths[i];
    p.conv_weight[i] = ::urwkv::conv_weight(t, t, 1, r, rng);
    p.conv_bias[i] = ::urwkv::conv_bias(t, t * r, rng);
  }
  p.fuse_weight = ::urwkv::conv_weight(1, 3 * t, 1, 1, rng);
  p.fuse_bias = ::urwkv::conv_bias(1, 3 * t, rng);
  p.mlp_w1 = linear_weight(channels, hidden, rng);
  p.mlp_b1 = constant_param({hidden}, 0.0);
  // Small output layer: the modulator starts close to plain LayerNorm.
  p.mlp_w2 = linear_weight(hidden, channels, rng, 0.1);
  p.mlp_b2 = constant_param({channels}, 0.0);
  return p;
}

LanParams LanParams::plain(std::size_t channels) {
  LanParams p;
  p.channels = channels;
  p.c_max = channels;
  p.modulated = false;
  p.gamma = constant_param({channels}, 1.0);
  p.beta = constant_param({channels}, 0.0);
  return p;
}

void LanParams::zero_modulator() {
  if (!modulated) {
    return;
  }
  auto zero = [](Tensor &t) {
    for (double &v : t.mutable_data()) {
      v = 0.0;
    }
  };
  for (std::size_t i = 0; i < kKernelWidths.size(); ++i) {
    zero(conv_weight[i]);
    zero(conv_bias[i]);
  }
  zero(fuse_weight);
  zero(fuse_bias);
  zero(mlp_w1);
  zero(mlp_b1);
  zero(mlp_w2);
  zero(mlp_b2);
}

void LanParams::collect(const std::string &prefix, ParamList &out) const {
  out.emplace_back(prefix + "gamma", gamma);
  out.emplace_back(prefix + "beta", beta);
  if (!modulated) {
    return;
  }
  for (std::size_t i = 0; i < kKernelWidths.size(); ++i) {
    const std::string tag = "mod.conv" + std::to_string(kKernelWidths[i]);
    out.emplace_back(prefix + tag + ".weight", conv_weight[i]);
    out.emplace_back(prefix + tag + ".bias", conv_bias[i]);
  }
  out.emplace_back(prefix + "mod.fuse.weight", fuse_weight);
  out.emplace_back(prefix + "mod.fuse.bias", fuse_bias);
  out.emplace_back(prefix + "mod.mlp1.weight", mlp_w1);
  out.emplace_back(prefix + "mod.mlp1.bias", mlp_b1);
  out.emplace_back(prefix + "mod.mlp2.weight", mlp_w2);
  out.emplace_back(prefix + "mod.mlp2.bias", mlp_b2);
}

Tensor predict_modulator(const Tensor &current,
                         const StageStateRegistry &registry,
                         const LanParams &params) {
  if (!params.modulated) {
    throw std::logic_error("predict_modulator on an unmodulated LAN");
  }
  const std::size_t t = params.num_states;
  if (registry.size() + 1 != t) {
    throw std::invalid_argument(
        "LAN built for " + std::to_string(t) + " states but registry holds " +
        std::to_string(registry.size()) + " completed stages");
  }
  if (current.ndim() != 3 || current.dim(0) != params.channels) {
    throw std::invalid_argument("LAN for " + std::to_string(params.channels) +
                                " channels got input " +
                                shape_str(current.shape()));
  }
  const std::size_t c_max = params.c_max;
  std::vector<Tensor> rows;
  rows.reserve(t);
  for (const Tensor &m : registry.states()) {
    rows.push_back(reshape(luminance_vector(m, c_max), {1, 1, c_max}));
  }
  rows.push_back(reshape(luminance_vector(current, c_max), {1, 1, c_max}));
  // T state-channels over a 1 x c_max strip.
  const Tensor stacked = concat(rows, 0);

  std::vector<Tensor> branches;
  for (std::size_t i = 0; i < LanParams::kKernelWidths.size(); ++i) {
    const std::size_t r = LanParams::kKernelWidths[i];
    branches.push_back(conv2d(stacked, params.conv_weight[i],
                              params.conv_bias[i], 1, Padding2d::same(1, r)));
  }
  const Tensor multi = concat(branches, 0);
  const Tensor fused =
      conv2d(multi, params.fuse_weight, params.fuse_bias, 1, Padding2d{});
  const Tensor agg = slice(reshape(fused, {1, c_max}), 1, 0, params.channels);
  const Tensor hidden =
      relu(add(matmul(agg, params.mlp_w1), params.mlp_b1));
  const Tensor out = add(matmul(hidden, params.mlp_w2), params.mlp_b2);
  // tanh rounds to exactly +-1 in double for |x| > ~19; keep the bound open.
  const double edge = std::nextafter(1.0, 0.0);
  return reshape(clamp(tanh(out), -edge, edge), {params.channels});
}

Tensor lan_forward(const Tensor &x, const StageStateRegistry &registry,
                   const LanParams &params, ForwardTrace *trace) {
  if (!params.modulated) {
    if (trace) ++trace->lan_plain;
    return layer_norm_channels(x, params.gamma, params.beta, kLanEps);
  }
  if (trace) ++trace->lan_modulated;
  const Tensor gamma_hat =
      add(params.gamma, predict_modulator(x, registry, params));
  return layer_norm_channels(x, gamma_hat, params.beta, kLanEps);
}

} // namespace urwkv
