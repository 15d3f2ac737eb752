// SPDX-License-Identifier: Apache-2.0
/**
 * @file   trainer.hpp
 * @brief  Augmentation, cropping and the training loop.
 *
 * Each step draws its batch, crops and transforms from an RNG seeded by
 * (seed, step), so a run resumed from a checkpoint replays the same
 * sequence as an uninterrupted one.
 */

#ifndef URWKV_TRAINER_HPP
#define URWKV_TRAINER_HPP

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "urwkv/checkpoint.hpp"
#include "urwkv/config.hpp"
#include "urwkv/degrade.hpp"
#include "urwkv/model.hpp"

namespace urwkv {

/// Random H-flip, V-flip and rotation by k * 90 degrees, identical for both
/// images of the pair.
ImagePair augment(const ImagePair &pair, Rng &rng);

/// The same random size x size window from both images; the full pair when
/// the image is not larger than the crop.
ImagePair random_crop(const ImagePair &pair, std::size_t size, Rng &rng);

/// Rng seeded from (seed, step).
Rng step_rng(std::uint64_t seed, std::size_t step);

struct StepLog {
  std::size_t step = 0; ///< completed steps
  double lr = 0.0;
  double loss = 0.0;
  double l1 = 0.0;
  double ssim_term = 0.0;
  double psnr = 0.0;
};

std::string csv_header();
std::string csv_row(const StepLog &row);

/// Non-finite loss. Carries the offending step and pair ids.
class NumericError : public std::runtime_error {
public:
  NumericError(const std::string &msg, std::size_t step,
               std::vector<std::string> batch_ids)
      : std::runtime_error(msg), step_(step), batch_ids_(std::move(batch_ids)) {}
  std::size_t step() const { return step_; }
  const std::vector<std::string> &batch_ids() const { return batch_ids_; }

private:
  std::size_t step_;
  std::vector<std::string> batch_ids_;
};

struct TrainOptions {
  /// Directory for log.csv, last.ckpt and best.ckpt; empty keeps everything
  /// in memory.
  std::string out_dir;
  /// Resume from this checkpoint (written by a previous run).
  std::string resume_from;
  /// Stop (and checkpoint) after this many total steps; 0 runs to the end.
  std::size_t stop_after = 0;
  std::function<void(const StepLog &)> on_log;
};

struct TrainResult {
  std::vector<StepLog> log; ///< every step of this invocation
  std::size_t start_step = 0;
  std::size_t end_step = 0;
  double best_score = 0.0;  ///< PSNR used for best-checkpoint selection
  std::size_t best_step = 0;
};

/// Trains in place. Pairs after the first (size - val_count) are held out
/// for best-checkpoint selection.
TrainResult train(UrwkvModel &model, const RunConfig &config,
                  const std::vector<ImagePair> &pairs,
                  const TrainOptions &options = {});

/// Mean PSNR / SSIM of clamped model outputs over full images.
std::pair<double, double> evaluate(const UrwkvModel &model,
                                   const std::vector<ImagePair> &pairs);

/// Writes params (plus optional extra entries) with the model config and
/// meta fields.
void save_model(const std::string &path, const UrwkvModel &model,
                const nlohmann::json &meta = nlohmann::json::object(),
                const std::vector<CheckpointEntry> &extra = {});
/// Builds a model from the config stored in the checkpoint and restores it.
UrwkvModel load_model(const std::string &path);

} // namespace urwkv

#endif // URWKV_TRAINER_HPP
