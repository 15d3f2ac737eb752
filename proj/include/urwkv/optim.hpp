// SPDX-License-Identifier: Apache-2.0
/**
 * @file   optim.hpp
 * @brief  Adam with bias correction and the cosine learning-rate schedule.
 */

#ifndef URWKV_OPTIM_HPP
#define URWKV_OPTIM_HPP

#include <cstddef>
#include <vector>

#include "urwkv/checkpoint.hpp"
#include "urwkv/params.hpp"

namespace urwkv {

/// lr_min + (lr_max - lr_min) (1 + cos(pi step / total)) / 2, with step
/// clamped to [0, total].
double cosine_lr(std::size_t step, std::size_t total, double lr_max,
                 double lr_min);

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.99;
  double eps = 1e-8;
};

class Adam {
public:
  Adam(ParamList params, AdamOptions options = {});

  /// Applies one update. Throws std::logic_error naming the first parameter
  /// without a gradient (step before backward).
  void step(double lr);
  void zero_grad();

  std::size_t steps() const { return step_; }
  const ParamList &params() const { return params_; }

  /// Moment buffers as "adam.m.<name>" / "adam.v.<name>" entries.
  void export_state(std::vector<CheckpointEntry> &out) const;
  /// Restores moments and the step counter; throws CheckpointError naming
  /// the first missing or mis-shaped buffer.
  void import_state(const Checkpoint &ckpt, std::size_t step);

private:
  ParamList params_;
  AdamOptions options_;
  std::size_t step_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

} // namespace urwkv

#endif // URWKV_OPTIM_HPP
