// SPDX-License-Identifier: Apache-2.0
/**
 * @file   lan.hpp
 * @brief  Luminance-adaptive normalization.
 *
 * A channel-wise LayerNorm whose scale gamma is perturbed by a bounded
 * modulator: the current input and every completed stage output are pooled
 * into zero-padded luminance vectors, stacked into a T x C_max map, filtered
 * by 1/3/5-wide convolutions along the channel axis, projected by a 1x1
 * convolution, truncated to the current width, and passed through an MLP and
 * tanh.
 */

#ifndef URWKV_LAN_HPP
#define URWKV_LAN_HPP

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "urwkv/params.hpp"
#include "urwkv/rwkv_ops.hpp"
#include "urwkv/tensor.hpp"

namespace urwkv {

/// Final-block outputs of completed stages, in stage order. One per image.
class StageStateRegistry {
public:
  explicit StageStateRegistry(std::size_t c_max) : c_max_(c_max) {}

  void record(const Tensor &state);
  void clear() { states_.clear(); }

  std::size_t size() const { return states_.size(); }
  std::size_t c_max() const { return c_max_; }
  const std::vector<Tensor> &states() const { return states_; }

private:
  std::size_t c_max_;
  std::vector<Tensor> states_;
};

/// Global average pool of a C x H x W map, zero-padded to c_max entries.
Tensor luminance_vector(const Tensor &x, std::size_t c_max);

struct LanParams {
  std::size_t channels = 0;
  std::size_t num_states = 1; ///< T: completed stages + the current input
  std::size_t c_max = 0;
  bool modulated = true;

  Tensor gamma;
  Tensor beta;

  static constexpr std::array<std::size_t, 3> kKernelWidths{1, 3, 5};
  /// T x T x 1 x r kernels and [T] biases, one per width.
  std::array<Tensor, 3> conv_weight;
  std::array<Tensor, 3> conv_bias;
  Tensor fuse_weight; ///< 1 x 3T x 1 x 1
  Tensor fuse_bias;   ///< [1]
  Tensor mlp_w1;      ///< C x hidden
  Tensor mlp_b1;      ///< [hidden]
  Tensor mlp_w2;      ///< hidden x C
  Tensor mlp_b2;      ///< [C]

  static LanParams init(std::size_t channels, std::size_t num_states,
                        std::size_t c_max, std::size_t hidden, bool modulated,
                        Rng &rng);
  /// Plain LayerNorm (gamma = 1, beta = 0, no modulator).
  static LanParams plain(std::size_t channels);

  void zero_modulator();
  void collect(const std::string &prefix, ParamList &out) const;
};

/// Delta gamma in (-1, 1)^C for the current input, given the completed
/// stages in the registry. The registry must hold exactly T - 1 states.
Tensor predict_modulator(const Tensor &current,
                         const StageStateRegistry &registry,
                         const LanParams &params);

Tensor lan_forward(const Tensor &x, const StageStateRegistry &registry,
                   const LanParams &params, ForwardTrace *trace = nullptr);

} // namespace urwkv

#endif // URWKV_LAN_HPP
