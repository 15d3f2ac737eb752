// SPDX-License-Identifier: Apache-2.0

#include "urwkv/model.hpp"

#include <stdexcept>

namespace urwkv {

namespace {

// Stride-2 3x3 convolution with the extra row/column on the bottom/right,
// so an even input halves exactly.
constexpr Padding2d kDownPad{0, 1, 0, 1};

void zero_tensor(Tensor &t) {
  for (double &v : t.mutable_data()) {
    v = 0.0;
  }
}

std::string stage_prefix(const char *kind, std::size_t stage) {
  return std::string(kind) + std::to_string(stage) + ".";
}

} // namespace

ConvLayer ConvLayer::init(std::size_t cin, std::size_t cout, std::size_t k,
                          std::size_t stride, Padding2d pad, Rng &rng,
                          double gain) {
  ConvLayer layer;
  layer.weight = conv_weight(cout, cin, k, k, rng, gain);
  layer.bias = conv_bias(cout, cin * k * k, rng);
  layer.stride = stride;
  layer.pad = pad;
  return layer;
}

Tensor ConvLayer::operator()(const Tensor &x) const {
  return conv2d(x, weight, bias, stride, pad);
}

void ConvLayer::collect(const std::string &prefix, ParamList &out) const {
  out.emplace_back(prefix + "weight", weight);
  out.emplace_back(prefix + "bias", bias);
}

void UrwkvBlock::collect(const std::string &prefix, ParamList &out) const {
  lan_spatial.collect(prefix + "lan_s.", out);
  spatial.collect(prefix + "spatial.", out);
  lan_channel.collect(prefix + "lan_c.", out);
  channel.collect(prefix + "channel.", out);
}

Tensor block_forward(const Tensor &x, const UrwkvBlock &block,
                     const StageStateRegistry &registry, StageContext &ctx,
                     ForwardTrace *trace) {
  const Tensor y =
      x + spatial_mix(lan_forward(x, registry, block.lan_spatial, trace),
                      block.spatial, ctx.spatial, trace);
  return y + channel_mix(lan_forward(y, registry, block.lan_channel, trace),
                         block.channel, ctx.channel, trace);
}

UrwkvBlock UrwkvModel::make_block(std::size_t channels, std::size_t num_states,
                                  Rng &rng) const {
  UrwkvBlock b;
  const bool mod = config_.lan_enabled;
  const std::size_t hidden = config_.lan_hidden(channels);
  b.lan_spatial =
      LanParams::init(channels, num_states, c_max(), hidden, mod, rng);
  b.spatial = SpatialMixWeights::init(channels, rng);
  b.lan_channel =
      LanParams::init(channels, num_states, c_max(), hidden, mod, rng);
  b.channel =
      ChannelMixWeights::init(channels, config_.channel_hidden(channels), rng);
  return b;
}

UrwkvModel::UrwkvModel(const UrwkvConfig &config) : config_(config) {
  config_.validate();
  Rng rng(config_.seed);
  const std::size_t c = config_.base_channels;
  const std::array<std::size_t, 3> width{c, 2 * c, 4 * c};

  stem_ = ConvLayer::init(3, c, 3, 1, Padding2d::uniform(1), rng);
  for (std::size_t s = 0; s < 3; ++s) {
    for (std::size_t i = 0; i < config_.n1; ++i) {
      encoder_[s].push_back(make_block(width[s], s + 1, rng));
    }
    if (s < 2) {
      down_[s] = ConvLayer::init(width[s], width[s + 1], 3, 2, kDownPad, rng);
    }
  }
  for (std::size_t d = 0; d < 3; ++d) {
    const std::size_t wd = width[2 - d];
    if (config_.ssf_enabled || config_.naive_skip == NaiveSkip::kCat) {
      skip_[d] = SkipProjection::init(2 * wd, wd, rng);
    } else if (config_.naive_skip == NaiveSkip::kMultiCat) {
      skip_[d] = SkipProjection::init(7 * c + wd, wd, rng);
    }
    if (config_.ssf_enabled) {
      ssf_[d] = SsfParams::init(config_.ssf_branch_width, rng);
    }
    for (std::size_t i = 0; i < config_.n2; ++i) {
      decoder_[d].push_back(make_block(wd, 4 + d, rng));
    }
    if (d < 2) {
      up_[d] = ConvLayer::init(wd, wd / 2, 3, 1, Padding2d::uniform(1), rng);
    }
  }
  // A small head keeps the initial output near the input.
  head_ = ConvLayer::init(c, 3, 3, 1, Padding2d::uniform(1), rng, 0.1);
}

ParamList UrwkvModel::parameters() const {
  ParamList out;
  stem_.collect("stem.", out);
  for (std::size_t s = 0; s < 3; ++s) {
    for (std::size_t i = 0; i < encoder_[s].size(); ++i) {
      encoder_[s][i].collect(
          stage_prefix("enc", s) + "block" + std::to_string(i) + ".", out);
    }
    if (s < 2) {
      down_[s].collect(stage_prefix("down", s), out);
    }
  }
  for (std::size_t d = 0; d < 3; ++d) {
    if (skip_[d].weight.defined()) {
      skip_[d].collect(stage_prefix("dec", d) + "skip.", out);
    }
    if (config_.ssf_enabled) {
      ssf_[d].collect(stage_prefix("dec", d) + "ssf.", out);
    }
    for (std::size_t i = 0; i < decoder_[d].size(); ++i) {
      decoder_[d][i].collect(
          stage_prefix("dec", d) + "block" + std::to_string(i) + ".", out);
    }
    if (d < 2) {
      up_[d].collect(stage_prefix("up", d), out);
    }
  }
  head_.collect("head.", out);
  return out;
}

EncoderOutput UrwkvModel::encode(const Tensor &image) const {
  if (image.ndim() != 3 || image.dim(0) != 3) {
    throw std::invalid_argument("model input must be 3 x H x W, got " +
                                shape_str(image.shape()));
  }
  if (image.dim(1) < 4 || image.dim(2) < 4) {
    throw std::invalid_argument("model input must be at least 4 x 4, got " +
                                shape_str(image.shape()));
  }
  EncoderOutput enc;
  enc.registry = StageStateRegistry(c_max());
  enc.height = image.dim(1);
  enc.width = image.dim(2);
  const std::size_t pad_h = (4 - enc.height % 4) % 4;
  const std::size_t pad_w = (4 - enc.width % 4) % 4;
  enc.padded_input = reflect_pad(image, pad_h, pad_w);

  Tensor x = stem_(enc.padded_input);
  for (std::size_t s = 0; s < 3; ++s) {
    StageContext ctx(config_.token_shift, config_.alpha);
    for (const UrwkvBlock &block : encoder_[s]) {
      x = block_forward(x, block, enc.registry, ctx, &enc.trace);
    }
    enc.states[s] = x;
    enc.registry.record(x);
    if (s < 2) {
      x = down_[s](x);
    }
  }
  return enc;
}

Tensor UrwkvModel::fuse_decoder_input(std::size_t stage,
                                      const Tensor &decoder_in,
                                      const std::array<Tensor, 3> &states,
                                      ForwardTrace &trace) const {
  const Tensor &skip = states[2 - stage];
  if (config_.ssf_enabled) {
    const Tensor aligned =
        align_states(states, decoder_in.dim(1), decoder_in.dim(2));
    ++trace.ssf_gates;
    return fuse_skip(decoder_in, skip, predict_gate(aligned, ssf_[stage]),
                     skip_[stage]);
  }
  switch (config_.naive_skip) {
  case NaiveSkip::kCat:
    ++trace.cat_skips;
    return fuse_skip(decoder_in, skip, Tensor(), skip_[stage]);
  case NaiveSkip::kAdd:
    ++trace.add_skips;
    return decoder_in + skip;
  case NaiveSkip::kMultiCat: {
    ++trace.multi_cat_skips;
    const std::size_t h = decoder_in.dim(1);
    const std::size_t w = decoder_in.dim(2);
    const Tensor parts[] = {align_to(states[0], h, w), align_to(states[1], h, w),
                            align_to(states[2], h, w), decoder_in};
    return conv2d(concat(parts, 0), skip_[stage].weight, skip_[stage].bias, 1,
                  Padding2d{});
  }
  }
  throw std::logic_error("unhandled skip mode");
}

Tensor UrwkvModel::decode(EncoderOutput &enc, bool clamp_output) const {
  if (enc.registry.size() != 3) {
    throw std::invalid_argument("decode needs a completed encoder pass");
  }
  Tensor x = enc.states[2];
  for (std::size_t d = 0; d < 3; ++d) {
    x = fuse_decoder_input(d, x, enc.states, enc.trace);
    StageContext ctx(config_.token_shift, config_.alpha);
    for (const UrwkvBlock &block : decoder_[d]) {
      x = block_forward(x, block, enc.registry, ctx, &enc.trace);
    }
    enc.registry.record(x);
    if (d < 2) {
      x = up_[d](upsample_nearest(x, 2));
    }
  }
  Tensor out = crop(enc.padded_input + head_(x), enc.height, enc.width);
  return clamp_output ? clamp(out, 0.0, 1.0) : out;
}

ForwardResult UrwkvModel::forward_full(const Tensor &image,
                                       bool clamp_output) const {
  EncoderOutput enc = encode(image);
  ForwardResult result;
  result.output = decode(enc, clamp_output);
  result.encoder_states = enc.states;
  result.registry_size = enc.registry.size();
  result.trace = enc.trace;
  return result;
}

void UrwkvModel::zero_residual_branches() {
  for (auto *stages : {&encoder_, &decoder_}) {
    for (auto &stage : *stages) {
      for (UrwkvBlock &block : stage) {
        zero_tensor(block.spatial.output);
        zero_tensor(block.channel.output);
      }
    }
  }
  zero_tensor(head_.weight);
  zero_tensor(head_.bias);
}

} // namespace urwkv
