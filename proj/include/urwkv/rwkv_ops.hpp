// SPDX-License-Identifier: Apache-2.0
/**
 * @file   rwkv_ops.hpp
 * @brief  Token-level mechanisms of the URWKV block: quad-directional token
 *         shift, EMA multi-state aggregation, bidirectional WKV attention and
 *         the spatial / channel mixing sub-blocks.
 *
 * Spatial tokens are the pixels of a C x H x W map flattened row-major
 * (left-to-right, top-to-bottom), giving a T x C token matrix, T = H * W.
 */

#ifndef URWKV_RWKV_OPS_HPP
#define URWKV_RWKV_OPS_HPP

#include <cstddef>
#include <string>

#include "urwkv/params.hpp"
#include "urwkv/tensor.hpp"

namespace urwkv {

/// Channel quarters take the left, right, upper and lower neighbour
/// respectively; out-of-image neighbours read as zero. C must be a multiple
/// of four.
Tensor q_shift(const Tensor &x);

/// Running exponential moving average over the intra-stage states of one
/// sub-block chain. The first absorbed state is kept unchanged; afterwards
/// aggregate <- alpha * x + (1 - alpha) * aggregate.
class IntraStateEMA {
public:
  explicit IntraStateEMA(double alpha);

  Tensor absorb(const Tensor &x);

  const Tensor &aggregate() const { return aggregate_; }
  std::size_t count() const { return count_; }
  double alpha() const { return alpha_; }
  void reset();

private:
  double alpha_;
  std::size_t count_ = 0;
  Tensor aggregate_;
};

inline Tensor msa_absorb(IntraStateEMA &ema, const Tensor &x) {
  return ema.absorb(x);
}

/// q_shift(msa_absorb(ema, x_lan)).
Tensor sq_shift(const Tensor &x_lan, IntraStateEMA &ema);

enum class StateAggregation {
  kNone,   ///< current state only
  kSingle, ///< alpha * x_t + (1 - alpha) * x_{t-1}, no recursion
  kMulti,  ///< EMA over every earlier state of the stage
};

struct TokenShiftMode {
  StateAggregation aggregation = StateAggregation::kMulti;
  bool qshift = true;

  bool operator==(const TokenShiftMode &) const = default;
};

StateAggregation parse_aggregation(const std::string &name);
std::string to_string(StateAggregation aggregation);

/// Counters of the code paths taken during a forward pass.
struct ForwardTrace {
  std::size_t qshift_calls = 0;
  std::size_t shift_skipped = 0;
  std::size_t multi_state_absorbs = 0;
  std::size_t single_state_mixes = 0;
  std::size_t no_aggregation = 0;
  std::size_t lan_modulated = 0;
  std::size_t lan_plain = 0;
  std::size_t ssf_gates = 0;
  std::size_t cat_skips = 0;
  std::size_t add_skips = 0;
  std::size_t multi_cat_skips = 0;
};

/// Intra-stage state chain for one sub-block kind, selecting the token
/// shift variant. Reset at every stage boundary.
class TokenShifter {
public:
  TokenShifter(TokenShiftMode mode, double alpha);

  Tensor operator()(const Tensor &x, ForwardTrace *trace = nullptr);
  void reset();

  const IntraStateEMA &ema() const { return ema_; }
  const TokenShiftMode &mode() const { return mode_; }

private:
  TokenShiftMode mode_;
  IntraStateEMA ema_;
  Tensor previous_;
};

struct BiWkvParams {
  Tensor w; ///< [C] raw decay; |w| is used
  Tensor u; ///< [C] current-token bonus
};

/// Bidirectional WKV over a T x C token matrix:
///   wkv_t = (sum_{i!=t} e^{-(|t-i|-1) |w| / T + k_i} v_i + e^{u + k_t} v_t)
///         / (sum_{i!=t} e^{-(|t-i|-1) |w| / T + k_i} + e^{u + k_t})
/// per channel, evaluated in O(T) with left/right recurrences.
Tensor bi_wkv(const Tensor &k, const Tensor &v, const BiWkvParams &params);

struct SpatialMixWeights {
  Tensor receptance; ///< C x C
  Tensor key;        ///< C x C
  Tensor value;      ///< C x C
  Tensor output;     ///< C x C (W_Os)
  BiWkvParams wkv;

  static SpatialMixWeights init(std::size_t channels, Rng &rng);
  void collect(const std::string &prefix, ParamList &out) const;
};

struct ChannelMixWeights {
  Tensor receptance; ///< C x C
  Tensor key;        ///< C x hC
  Tensor value;      ///< hC x C (W_Vc)
  Tensor output;     ///< C x C (W_Oc)

  static ChannelMixWeights init(std::size_t channels, std::size_t hidden,
                                Rng &rng);
  void collect(const std::string &prefix, ParamList &out) const;
};

/// C x H x W <-> T x C.
Tensor to_tokens(const Tensor &x);
Tensor from_tokens(const Tensor &tokens, std::size_t h, std::size_t w);

/// (sigmoid(R_s) * BiWKV(K_s, V_s)) W_Os on the shifted input.
Tensor spatial_mix(const Tensor &x, const SpatialMixWeights &weights,
                   TokenShifter &shift, ForwardTrace *trace = nullptr);

/// (sigmoid(R_c) * SquaredReLU(K_c) W_Vc) W_Oc on the shifted input.
Tensor channel_mix(const Tensor &x, const ChannelMixWeights &weights,
                   TokenShifter &shift, ForwardTrace *trace = nullptr);

} // namespace urwkv

#endif // URWKV_RWKV_OPS_HPP
