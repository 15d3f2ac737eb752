// SPDX-License-Identifier: Apache-2.0
/**
 * @file   complexity.hpp
 * @brief  Parameter and FLOP accounting.
 *
 * Analytic counts are derived from the config alone and broken down by
 * module category. FLOPs are multiply-accumulates of convolutions, linear
 * projections and the Bi-WKV recurrences; normalization, activations and
 * elementwise ops are not counted.
 *
 * Per-op formulas:
 *   conv k x k, Ci -> Co, output h x w:  params Co (Ci k^2 + 1),
 *                                        MACs   Co Ci k^2 h w
 *   linear in -> out over T tokens:      params in out, MACs T in out
 *   Bi-WKV over T tokens, C channels:    params 2C, MACs 4 T C
 *   LayerNorm affine:                    params 2C
 */

#ifndef URWKV_COMPLEXITY_HPP
#define URWKV_COMPLEXITY_HPP

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "urwkv/config.hpp"
#include "urwkv/model.hpp"

namespace urwkv {

/// Categories used in breakdowns.
inline const std::vector<std::string> &complexity_categories() {
  static const std::vector<std::string> names = {
      "stem_head",   "sampling",      "norm_affine",     "lan_modulator",
      "spatial_mix", "channel_mix",   "skip_projection", "ssf_gate"};
  return names;
}

struct CategoryCost {
  std::size_t params = 0;
  std::uint64_t macs = 0;
};

struct ComplexityReport {
  std::size_t height = 0; ///< padded extent used for MACs
  std::size_t width = 0;
  std::map<std::string, CategoryCost> categories;
  std::size_t total_params = 0;
  std::uint64_t total_macs = 0;
};

/// Analytic report for a config at input size h x w (padded to a multiple
/// of four internally).
ComplexityReport analyze_complexity(const UrwkvConfig &config, std::size_t h,
                                    std::size_t w);

/// Category of a hierarchical parameter name.
std::string param_category(const std::string &name);

/// Element counts of an instantiated model grouped by category.
std::map<std::string, std::size_t> params_by_category(const ParamList &params);

std::size_t count_params(const UrwkvModel &model);
std::uint64_t count_flops(const UrwkvModel &model, std::size_t h,
                          std::size_t w);

} // namespace urwkv

#endif // URWKV_COMPLEXITY_HPP
