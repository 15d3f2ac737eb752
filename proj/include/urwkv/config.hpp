// SPDX-License-Identifier: Apache-2.0
/**
 * @file   config.hpp
 * @brief  Model, loss and training configuration, read from one flat JSON
 *         document. Unknown keys are rejected.
 */

#ifndef URWKV_CONFIG_HPP
#define URWKV_CONFIG_HPP

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "urwkv/rwkv_ops.hpp"

namespace urwkv {

/// Skip connection used when SSF is disabled.
enum class NaiveSkip { kCat, kAdd, kMultiCat };

NaiveSkip parse_naive_skip(const std::string &name);
std::string to_string(NaiveSkip skip);

struct LossWeights {
  double l1 = 1.0;
  double ssim = 1.0;
  double perceptual = 0.0;
};

struct UrwkvConfig {
  std::size_t base_channels = 32;
  std::size_t n1 = 3;
  std::size_t n2 = 2;
  double alpha = 0.5;
  bool lan_enabled = true;
  bool ssf_enabled = true;
  NaiveSkip naive_skip = NaiveSkip::kCat;
  TokenShiftMode token_shift;
  /// Channel-mix hidden width = ratio * C.
  double channel_mix_ratio = 4.0;
  /// LAN MLP hidden width = ratio * C_t.
  double lan_mlp_ratio = 1.5;
  std::size_t ssf_branch_width = 4;
  LossWeights loss;
  std::uint64_t seed = 0;

  std::size_t channel_hidden(std::size_t channels) const;
  std::size_t lan_hidden(std::size_t channels) const;
  /// Throws ConfigError on inconsistent values.
  void validate() const;
};

struct TrainConfig {
  std::size_t steps = 1000;
  double lr_max = 2e-4;
  double lr_min = 1e-6;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.99;
  double adam_eps = 1e-8;
  std::size_t batch_size = 1;
  std::size_t crop_size = 128;
  bool augment = true;
  std::size_t log_every = 10;
  std::size_t checkpoint_every = 100;
  /// Pairs held out from the end of the corpus for best-checkpoint selection;
  /// 0 selects on training PSNR.
  std::size_t val_count = 0;
};

struct RunConfig {
  UrwkvConfig model;
  TrainConfig train;
};

class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Parses a flat document; throws ConfigError listing every unknown key.
RunConfig parse_run_config(const nlohmann::json &doc);
RunConfig load_run_config(const std::string &path);
nlohmann::json to_json(const RunConfig &config);
nlohmann::json to_json(const UrwkvConfig &config);
UrwkvConfig model_config_from_json(const nlohmann::json &doc);

} // namespace urwkv

#endif // URWKV_CONFIG_HPP
