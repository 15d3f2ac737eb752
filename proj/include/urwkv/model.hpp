// SPDX-License-Identifier: Apache-2.0
/**
 * @file   model.hpp
 * @brief  URWKV encoder-decoder: stem, three encoder stages of n1 blocks,
 *         three decoder stages of n2 blocks with state-aware skip fusion,
 *         and a residual output head.
 *
 * Stage widths are C, 2C, 4C at scales 1, 1/2, 1/4. Inputs are reflect
 * padded to a multiple of four and cropped back at the output.
 */

#ifndef URWKV_MODEL_HPP
#define URWKV_MODEL_HPP

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "urwkv/config.hpp"
#include "urwkv/lan.hpp"
#include "urwkv/ops.hpp"
#include "urwkv/params.hpp"
#include "urwkv/rwkv_ops.hpp"
#include "urwkv/ssf.hpp"

namespace urwkv {

struct ConvLayer {
  Tensor weight;
  Tensor bias;
  std::size_t stride = 1;
  Padding2d pad;

  static ConvLayer init(std::size_t cin, std::size_t cout, std::size_t k,
                        std::size_t stride, Padding2d pad, Rng &rng,
                        double gain = 1.0);
  Tensor operator()(const Tensor &x) const;
  void collect(const std::string &prefix, ParamList &out) const;
};

struct UrwkvBlock {
  LanParams lan_spatial;
  LanParams lan_channel;
  SpatialMixWeights spatial;
  ChannelMixWeights channel;

  void collect(const std::string &prefix, ParamList &out) const;
};

/// Intra-stage state chains (spatial and channel), fresh for every stage.
struct StageContext {
  TokenShifter spatial;
  TokenShifter channel;

  StageContext(TokenShiftMode mode, double alpha)
      : spatial(mode, alpha), channel(mode, alpha) {}
};

/// y = x + spatial_mix(LAN(x)); z = y + channel_mix(LAN(y)).
Tensor block_forward(const Tensor &x, const UrwkvBlock &block,
                     const StageStateRegistry &registry, StageContext &ctx,
                     ForwardTrace *trace = nullptr);

struct EncoderOutput {
  std::array<Tensor, 3> states;
  StageStateRegistry registry{0};
  Tensor padded_input;
  std::size_t height = 0;
  std::size_t width = 0;
  ForwardTrace trace;
};

struct ForwardResult {
  Tensor output;
  std::array<Tensor, 3> encoder_states;
  std::size_t registry_size = 0;
  ForwardTrace trace;
};

class UrwkvModel {
public:
  explicit UrwkvModel(const UrwkvConfig &config);

  const UrwkvConfig &config() const { return config_; }
  std::size_t c_max() const { return 4 * config_.base_channels; }

  /// Every learnable tensor, in a fixed order, with hierarchical names.
  ParamList parameters() const;

  /// image: 3 x H x W with H, W >= 4.
  EncoderOutput encode(const Tensor &image) const;
  Tensor decode(EncoderOutput &encoded, bool clamp_output = true) const;

  ForwardResult forward_full(const Tensor &image,
                             bool clamp_output = true) const;
  Tensor forward(const Tensor &image, bool clamp_output = true) const {
    return forward_full(image, clamp_output).output;
  }

  /// Zeroes both mixing output projections of every block and the head, so
  /// the network computes clamp(input).
  void zero_residual_branches();

  const std::vector<UrwkvBlock> &encoder_stage(std::size_t i) const {
    return encoder_.at(i);
  }
  const std::vector<UrwkvBlock> &decoder_stage(std::size_t i) const {
    return decoder_.at(i);
  }
  std::vector<UrwkvBlock> &encoder_stage(std::size_t i) {
    return encoder_.at(i);
  }
  std::vector<UrwkvBlock> &decoder_stage(std::size_t i) {
    return decoder_.at(i);
  }

private:
  UrwkvBlock make_block(std::size_t channels, std::size_t num_states,
                        Rng &rng) const;
  Tensor fuse_decoder_input(std::size_t stage, const Tensor &decoder_in,
                            const std::array<Tensor, 3> &encoder_states,
                            ForwardTrace &trace) const;

  UrwkvConfig config_;
  ConvLayer stem_;
  std::array<std::vector<UrwkvBlock>, 3> encoder_;
  std::array<ConvLayer, 2> down_;
  std::array<SkipProjection, 3> skip_;
  std::array<SsfParams, 3> ssf_;
  std::array<std::vector<UrwkvBlock>, 3> decoder_;
  std::array<ConvLayer, 2> up_;
  ConvLayer head_;
};

} // namespace urwkv

#endif // URWKV_MODEL_HPP
