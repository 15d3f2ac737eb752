// SPDX-License-Identifier: Apache-2.0

#include "urwkv/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "urwkv/image.hpp"
#include "urwkv/losses.hpp"
#include "urwkv/metrics.hpp"
#include "urwkv/ops.hpp"
#include "urwkv/optim.hpp"

namespace urwkv {

namespace fs = std::filesystem;
using nlohmann::json;

ImagePair augment(const ImagePair &pair, Rng &rng) {
  std::uniform_int_distribution<int> coin(0, 1);
  std::uniform_int_distribution<int> quarter(0, 3);
  const bool hflip = coin(rng) == 1;
  const bool vflip = coin(rng) == 1;
  const int k = quarter(rng);
  auto apply = [&](Tensor x) {
    if (hflip) x = flip_horizontal(x);
    if (vflip) x = flip_vertical(x);
    return rot90(x, k);
  };
  return {pair.id, apply(pair.degraded), apply(pair.reference)};
}

ImagePair random_crop(const ImagePair &pair, std::size_t size, Rng &rng) {
  const std::size_t h = pair.degraded.dim(1);
  const std::size_t w = pair.degraded.dim(2);
  const std::size_t ch = std::min(size, h);
  const std::size_t cw = std::min(size, w);
  const std::size_t top =
      std::uniform_int_distribution<std::size_t>(0, h - ch)(rng);
  const std::size_t left =
      std::uniform_int_distribution<std::size_t>(0, w - cw)(rng);
  return {pair.id, crop_region(pair.degraded, top, left, ch, cw),
          crop_region(pair.reference, top, left, ch, cw)};
}

Rng step_rng(std::uint64_t seed, std::size_t step) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(step),
                    static_cast<std::uint32_t>(step >> 32), 0x7472u};
  return Rng(seq);
}

std::string csv_header() { return "step,lr,loss,l1,ssim_term,psnr"; }

std::string csv_row(const StepLog &r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g", r.step,
                r.lr, r.loss, r.l1, r.ssim_term, r.psnr);
  return buf;
}

std::pair<double, double> evaluate(const UrwkvModel &model,
                                   const std::vector<ImagePair> &pairs) {
  NoGradGuard guard;
  double p = 0.0, s = 0.0;
  for (const ImagePair &pair : pairs) {
    const Tensor out = model.forward(pair.degraded, true);
    p += psnr(out, pair.reference);
    s += ssim(out, pair.reference);
  }
  const double n = static_cast<double>(std::max<std::size_t>(pairs.size(), 1));
  return {p / n, s / n};
}

void save_model(const std::string &path, const UrwkvModel &model,
                const json &meta, const std::vector<CheckpointEntry> &extra) {
  Checkpoint ckpt;
  ckpt.meta = meta;
  ckpt.meta["config"] = to_json(model.config());
  ckpt.tensors = snapshot(model.parameters());
  ckpt.tensors.insert(ckpt.tensors.end(), extra.begin(), extra.end());
  save_checkpoint(path, ckpt);
}

UrwkvModel load_model(const std::string &path) {
  const Checkpoint ckpt = load_checkpoint(path);
  if (!ckpt.meta.contains("config")) {
    throw CheckpointError(path + " carries no model config");
  }
  UrwkvModel model(model_config_from_json(ckpt.meta.at("config")));
  restore(ckpt, model.parameters());
  return model;
}

namespace {

std::vector<std::size_t> pick_batch(std::size_t n, std::size_t batch,
                                    Rng &rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::vector<std::size_t> out;
  if (batch <= n) {
    for (std::size_t i = 0; i < batch; ++i) {
      const std::size_t j =
          std::uniform_int_distribution<std::size_t>(i, n - 1)(rng);
      std::swap(idx[i], idx[j]);
      out.push_back(idx[i]);
    }
  } else {
    for (std::size_t i = 0; i < batch; ++i) {
      out.push_back(std::uniform_int_distribution<std::size_t>(0, n - 1)(rng));
    }
  }
  return out;
}

// Keeps the header and rows up to `step` of an existing log.
void truncate_log(const fs::path &path, std::size_t step) {
  std::vector<std::string> kept;
  {
    std::ifstream in(path);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      if (kept.empty() && line == csv_header()) {
        kept.push_back(line);
        continue;
      }
      const std::size_t row_step = std::stoul(line.substr(0, line.find(',')));
      if (row_step <= step) kept.push_back(line);
    }
  }
  if (kept.empty() || kept.front() != csv_header()) {
    kept.insert(kept.begin(), csv_header());
  }
  std::ofstream out(path, std::ios::trunc);
  for (const std::string &l : kept) out << l << "\n";
}

} // namespace

TrainResult train(UrwkvModel &model, const RunConfig &config,
                  const std::vector<ImagePair> &pairs,
                  const TrainOptions &options) {
  const TrainConfig &tc = config.train;
  if (pairs.empty()) {
    throw ConfigError("training corpus is empty");
  }
  const std::size_t n_val = std::min(tc.val_count, pairs.size() - 1);
  const std::vector<ImagePair> train_set(pairs.begin(),
                                         pairs.end() - static_cast<long>(n_val));
  const std::vector<ImagePair> val_set(pairs.end() - static_cast<long>(n_val),
                                       pairs.end());

  ParamList params = model.parameters();
  Adam adam(params, {tc.adam_beta1, tc.adam_beta2, tc.adam_eps});
  TrainResult result;
  result.best_score = -std::numeric_limits<double>::infinity();
  std::size_t start = 0;
  if (!options.resume_from.empty()) {
    const Checkpoint ckpt = load_checkpoint(options.resume_from);
    restore(ckpt, params);
    start = ckpt.meta.at("step").get<std::size_t>();
    adam.import_state(ckpt, ckpt.meta.at("adam_step").get<std::size_t>());
    result.best_score = ckpt.meta.value("best_score", result.best_score);
    result.best_step = ckpt.meta.value("best_step", std::size_t{0});
  }
  result.start_step = start;
  const std::size_t end = options.stop_after > 0
                              ? std::min(options.stop_after, tc.steps)
                              : tc.steps;

  std::ofstream csv;
  fs::path out_dir;
  if (!options.out_dir.empty()) {
    out_dir = options.out_dir;
    fs::create_directories(out_dir);
    const fs::path log_path = out_dir / "log.csv";
    if (start > 0 && fs::exists(log_path)) {
      truncate_log(log_path, start);
      csv.open(log_path, std::ios::app);
    } else {
      csv.open(log_path, std::ios::trunc);
      csv << csv_header() << "\n";
    }
  }

  const LossWeights &weights = model.config().loss;
  const std::uint64_t seed = model.config().seed;
  double window_psnr = 0.0;
  std::size_t window_n = 0;

  for (std::size_t s = start; s < end; ++s) {
    const double lr = cosine_lr(s, tc.steps, tc.lr_max, tc.lr_min);
    Rng rng = step_rng(seed, s);
    const auto batch = pick_batch(train_set.size(), tc.batch_size, rng);
    adam.zero_grad();

    StepLog row;
    row.step = s + 1;
    row.lr = lr;
    Tensor total;
    std::vector<std::string> ids;
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    for (std::size_t i : batch) {
      ImagePair sample = random_crop(train_set[i], tc.crop_size, rng);
      if (tc.augment) {
        sample = augment(sample, rng);
      }
      ids.push_back(sample.id);
      // The loss sees the unclamped output so saturated pixels still pass
      // gradient.
      const Tensor pred = model.forward(sample.degraded, false);
      const LossTerms terms =
          composite_loss_terms(pred, sample.reference, weights);
      const Tensor scaled = scale(terms.total, inv_b);
      total = total.defined() ? add(total, scaled) : scaled;
      row.l1 += terms.l1 * inv_b;
      row.ssim_term += terms.ssim_term * inv_b;
      NoGradGuard guard;
      row.psnr += psnr(clamp(pred, 0.0, 1.0), sample.reference) * inv_b;
    }
    row.loss = total.item();
    if (!std::isfinite(row.loss)) {
      std::string msg = "non-finite loss at step " + std::to_string(s + 1) +
                        ", batch:";
      for (const auto &id : ids) msg += " " + id;
      throw NumericError(msg, s + 1, ids);
    }
    total.backward();
    adam.step(lr);
    result.log.push_back(row);
    window_psnr += row.psnr;
    ++window_n;

    const bool last = s + 1 == end;
    if ((s + 1) % tc.log_every == 0 || s + 1 == tc.steps) {
      if (csv.is_open()) {
        csv << csv_row(row) << "\n";
        csv.flush();
      }
      if (options.on_log) options.on_log(row);
    }
    const bool ckpt_point =
        (tc.checkpoint_every > 0 && (s + 1) % tc.checkpoint_every == 0) || last;
    if (ckpt_point) {
      const double score = val_set.empty() ? window_psnr / window_n
                                           : evaluate(model, val_set).first;
      window_psnr = 0.0;
      window_n = 0;
      json meta = {{"step", s + 1},
                   {"adam_step", adam.steps()},
                   {"run", to_json(config)}};
      if (score > result.best_score) {
        result.best_score = score;
        result.best_step = s + 1;
        if (!out_dir.empty()) {
          json best_meta = meta;
          best_meta["score"] = score;
          save_model((out_dir / "best.ckpt").string(), model, best_meta);
        }
      }
      if (!out_dir.empty()) {
        meta["best_score"] = result.best_score;
        meta["best_step"] = result.best_step;
        std::vector<CheckpointEntry> extra;
        adam.export_state(extra);
        save_model((out_dir / "last.ckpt").string(), model, meta, extra);
      }
    }
  }
  result.end_step = std::max(start, end);
  return result;
}

} // namespace urwkv
