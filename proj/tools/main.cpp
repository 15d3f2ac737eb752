// SPDX-License-Identifier: Apache-2.0
//
// urwkv_cli: corpus generation, training, evaluation, inference, ablation
// runs and complexity reports.
//
// Exit codes: 0 success, 1 usage error, 2 data or config error, 3 numeric
// failure.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "urwkv/checkpoint.hpp"
#include "urwkv/complexity.hpp"
#include "urwkv/config.hpp"
#include "urwkv/corpus.hpp"
#include "urwkv/image.hpp"
#include "urwkv/metrics.hpp"
#include "urwkv/model.hpp"
#include "urwkv/trainer.hpp"

#ifndef URWKV_GIT_DESCRIBE
#define URWKV_GIT_DESCRIBE "unknown"
#endif

namespace fs = std::filesystem;
using nlohmann::json;
using namespace urwkv;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(
      std::chrono::system_clock::now());
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

RunConfig config_or_default(const std::string &path) {
  return path.empty() ? parse_run_config(json::object())
                      : load_run_config(path);
}

void write_json(const fs::path &path, const json &doc) {
  std::ofstream out(path);
  if (!out) {
    throw ConfigError("cannot write " + path.string());
  }
  out << doc.dump(2) << "\n";
}

json run_manifest(const RunConfig &rc, const std::string &started,
                  const json &metrics) {
  return {{"config", to_json(rc)},
          {"seed", rc.model.seed},
          {"git_describe", URWKV_GIT_DESCRIBE},
          {"start_time", started},
          {"end_time", utc_now()},
          {"metrics", metrics}};
}

std::pair<std::size_t, std::size_t> parse_hw(const std::string &hw) {
  const auto x = hw.find_first_of("xX");
  try {
    if (x == std::string::npos) {
      const std::size_t s = std::stoul(hw);
      return {s, s};
    }
    return {std::stoul(hw.substr(0, x)), std::stoul(hw.substr(x + 1))};
  } catch (const std::exception &) {
    throw CLI::ValidationError("--hw", "expected HxW, got " + hw);
  }
}

// ---------------------------------------------------------------- commands

int cmd_gen(const std::string &out, std::size_t count, std::size_t size,
            std::uint64_t seed) {
  write_corpus(out, CorpusSpec{count, size, seed});
  std::printf("wrote %zu pairs (%zux%zu) to %s\n", count, size, size,
              out.c_str());
  return 0;
}

json train_summary(const TrainResult &r) {
  json m = {{"start_step", r.start_step},
            {"end_step", r.end_step},
            {"best_score", r.best_score},
            {"best_step", r.best_step}};
  if (!r.log.empty()) {
    const StepLog &last = r.log.back();
    m["final_loss"] = last.loss;
    m["final_train_psnr"] = last.psnr;
  }
  return m;
}

int cmd_train(const std::string &config_path, const std::string &data,
              const std::string &out, const std::string &resume,
              std::size_t stop_after) {
  const std::string started = utc_now();
  const RunConfig rc = load_run_config(config_path);
  const std::vector<ImagePair> pairs = load_corpus(data);
  UrwkvModel model(rc.model);
  TrainOptions opts;
  opts.out_dir = out;
  opts.resume_from = resume;
  opts.stop_after = stop_after;
  opts.on_log = [](const StepLog &row) {
    std::printf("step %zu  lr %.3e  loss %.5f  psnr %.2f\n", row.step, row.lr,
                row.loss, row.psnr);
    std::fflush(stdout);
  };
  const TrainResult r = train(model, rc, pairs, opts);
  write_json(fs::path(out) / "run_manifest.json",
             run_manifest(rc, started, train_summary(r)));
  std::printf("best score %.4f dB at step %zu\n", r.best_score, r.best_step);
  return 0;
}

int cmd_eval(const std::string &ckpt, const std::string &data,
             bool as_json) {
  const UrwkvModel model = load_model(ckpt);
  const std::vector<ImagePair> pairs = load_corpus(data);
  json rows = json::array();
  double mp = 0.0, ms = 0.0;
  if (!as_json) std::printf("%-12s %10s %8s\n", "id", "psnr", "ssim");
  for (const ImagePair &pair : pairs) {
    const auto [p, s] = evaluate(model, {pair});
    mp += p;
    ms += s;
    rows.push_back({{"id", pair.id}, {"psnr", p}, {"ssim", s}});
    if (!as_json) std::printf("%-12s %10.4f %8.5f\n", pair.id.c_str(), p, s);
  }
  const double n = pairs.empty() ? 1.0 : static_cast<double>(pairs.size());
  if (as_json) {
    std::printf("%s\n", json{{"images", rows},
                             {"mean_psnr", mp / n},
                             {"mean_ssim", ms / n}}
                            .dump(2)
                            .c_str());
  } else {
    std::printf("%-12s %10.4f %8.5f\n", "mean", mp / n, ms / n);
  }
  return 0;
}

int cmd_infer(const std::string &ckpt, const std::string &in,
              const std::string &out) {
  const UrwkvModel model = load_model(ckpt);
  const Tensor image = read_ppm(in);
  Tensor restored;
  {
    NoGradGuard guard;
    restored = model.forward(image, true);
  }
  write_ppm(out, restored);
  std::printf("%s: %zux%zu -> %s\n", in.c_str(), image.dim(1), image.dim(2),
              out.c_str());
  return 0;
}

int cmd_complexity(const std::string &config_path, const std::string &hw,
                   bool as_json) {
  const RunConfig rc = config_or_default(config_path);
  const auto [h, w] = parse_hw(hw);
  const ComplexityReport rep = analyze_complexity(rc.model, h, w);
  if (as_json) {
    json cats = json::object();
    for (const auto &[name, c] : rep.categories) {
      cats[name] = {{"params", c.params}, {"macs", c.macs}};
    }
    std::printf("%s\n", json{{"height", rep.height},
                             {"width", rep.width},
                             {"params", rep.total_params},
                             {"macs", rep.total_macs},
                             {"categories", cats}}
                            .dump(2)
                            .c_str());
    return 0;
  }
  std::printf("input %zux%zu (padded %zux%zu)\n", h, w, rep.height, rep.width);
  std::printf("%-16s %12s %12s\n", "module", "params", "GMACs");
  for (const std::string &name : complexity_categories()) {
    const CategoryCost &c = rep.categories.at(name);
    std::printf("%-16s %12zu %12.4f\n", name.c_str(), c.params,
                static_cast<double>(c.macs) * 1e-9);
  }
  std::printf("%-16s %12zu %12.4f\n", "total", rep.total_params,
              static_cast<double>(rep.total_macs) * 1e-9);
  std::printf("params %.3fM\n", static_cast<double>(rep.total_params) * 1e-6);
  return 0;
}

int cmd_init(const std::string &config_path, const std::string &out,
             bool identity) {
  const RunConfig rc = config_or_default(config_path);
  UrwkvModel model(rc.model);
  if (identity) {
    model.zero_residual_branches();
  }
  save_model(out, model, {{"step", 0}, {"identity", identity}});
  std::printf("wrote %s (%zu params)\n", out.c_str(), count_params(model));
  return 0;
}

// Ablation variants reachable from a base config by switches alone.
std::vector<std::pair<std::string, UrwkvConfig>>
ablation_variants(const UrwkvConfig &base) {
  std::vector<std::pair<std::string, UrwkvConfig>> out;
  auto add = [&](const std::string &name, auto edit) {
    UrwkvConfig c = base;
    edit(c);
    out.emplace_back(name, c);
  };
  add("baseline", [](UrwkvConfig &c) { c.lan_enabled = false; c.ssf_enabled = false; });
  add("+ssf", [](UrwkvConfig &c) { c.lan_enabled = false; c.ssf_enabled = true; });
  add("+lan", [](UrwkvConfig &c) { c.lan_enabled = true; c.ssf_enabled = false; });
  add("full", [](UrwkvConfig &c) { c.lan_enabled = true; c.ssf_enabled = true; });
  using SA = StateAggregation;
  add("shift_single", [](UrwkvConfig &c) { c.token_shift = {SA::kSingle, false}; });
  add("shift_multi", [](UrwkvConfig &c) { c.token_shift = {SA::kMulti, false}; });
  add("shift_qshift", [](UrwkvConfig &c) { c.token_shift = {SA::kNone, true}; });
  add("shift_single_q", [](UrwkvConfig &c) { c.token_shift = {SA::kSingle, true}; });
  add("shift_multi_q", [](UrwkvConfig &c) { c.token_shift = {SA::kMulti, true}; });
  add("skip_add", [](UrwkvConfig &c) { c.ssf_enabled = false; c.naive_skip = NaiveSkip::kAdd; });
  add("skip_cat", [](UrwkvConfig &c) { c.ssf_enabled = false; c.naive_skip = NaiveSkip::kCat; });
  add("skip_multi_cat", [](UrwkvConfig &c) { c.ssf_enabled = false; c.naive_skip = NaiveSkip::kMultiCat; });
  return out;
}

int cmd_ablate(const std::string &config_path, const std::string &data,
               const std::string &out, std::size_t val_count,
               const std::vector<std::string> &only) {
  const std::string started = utc_now();
  const RunConfig rc = config_or_default(config_path);
  const std::vector<ImagePair> pairs = load_corpus(data);
  if (pairs.size() <= val_count) {
    throw ConfigError("corpus needs more than " + std::to_string(val_count) +
                      " pairs for this hold-out");
  }
  const std::vector<ImagePair> train_set(pairs.begin(),
                                         pairs.end() - static_cast<long>(val_count));
  const std::vector<ImagePair> held(pairs.end() - static_cast<long>(val_count),
                                    pairs.end());
  fs::create_directories(out);
  std::ofstream csv(fs::path(out) / "ablation.csv");
  csv << "variant,params,gmacs_256,psnr,ssim\n";
  json results = json::array();
  for (const auto &[name, cfg] : ablation_variants(rc.model)) {
    if (!only.empty() && std::find(only.begin(), only.end(), name) == only.end()) {
      continue;
    }
    RunConfig variant = rc;
    variant.model = cfg;
    variant.train.val_count = 0;
    UrwkvModel model(cfg);
    TrainOptions opts;
    opts.out_dir = (fs::path(out) / name).string();
    train(model, variant, train_set, opts);
    const auto [p, s] = evaluate(model, held.empty() ? train_set : held);
    const std::size_t params = count_params(model);
    const double gmacs = static_cast<double>(count_flops(model, 256, 256)) * 1e-9;
    char line[256];
    std::snprintf(line, sizeof line, "%s,%zu,%.4f,%.6f,%.6f", name.c_str(),
                  params, gmacs, p, s);
    csv << line << "\n";
    csv.flush();
    std::printf("%-16s params %9zu  GMACs %8.3f  psnr %8.4f  ssim %.5f\n",
                name.c_str(), params, gmacs, p, s);
    std::fflush(stdout);
    results.push_back({{"variant", name}, {"params", params},
                       {"psnr", p}, {"ssim", s}});
  }
  write_json(fs::path(out) / "run_manifest.json",
             run_manifest(rc, started, {{"variants", results}}));
  return 0;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"URWKV low-light restoration toolkit"};
  app.require_subcommand(1);

  std::string out, data, config, ckpt, in, resume, hw = "256x256";
  std::size_t count = 0, size = 64, stop_after = 0, val_count = 4;
  std::uint64_t seed = 0;
  bool identity = false, as_json = false;
  std::vector<std::string> only;

  CLI::App *gen = app.add_subcommand("gen", "generate a synthetic paired corpus");
  gen->add_option("--out", out, "corpus root")->required();
  gen->add_option("--count", count, "number of pairs")->required();
  gen->add_option("--size", size, "square image side")->check(CLI::PositiveNumber);
  gen->add_option("--seed", seed, "corpus seed");

  CLI::App *trn = app.add_subcommand("train", "train a model on a corpus");
  trn->add_option("--config", config, "run config JSON")->required();
  trn->add_option("--data", data, "corpus root")->required();
  trn->add_option("--out", out, "run directory")->required();
  trn->add_option("--resume", resume, "checkpoint to resume from");
  trn->add_option("--stop-after", stop_after, "stop (and checkpoint) at this step");

  CLI::App *ev = app.add_subcommand("eval", "evaluate a checkpoint on a corpus");
  ev->add_option("--ckpt", ckpt, "checkpoint")->required();
  ev->add_option("--data", data, "corpus root")->required();
  ev->add_flag("--json", as_json, "print JSON");

  CLI::App *inf = app.add_subcommand("infer", "restore one PPM image");
  inf->add_option("--ckpt", ckpt, "checkpoint")->required();
  inf->add_option("--in", in, "input PPM")->required();
  inf->add_option("--out", out, "output PPM")->required();

  CLI::App *cx = app.add_subcommand("complexity", "parameter and FLOP report");
  cx->add_option("--config", config, "run config JSON (defaults if omitted)");
  cx->add_option("--hw", hw, "input size HxW");
  cx->add_flag("--json", as_json, "print JSON");

  CLI::App *ini = app.add_subcommand("init", "write an untrained checkpoint");
  ini->add_option("--config", config, "run config JSON (defaults if omitted)");
  ini->add_option("--out", out, "checkpoint path")->required();
  ini->add_flag("--identity", identity, "zero every residual branch");

  CLI::App *abl = app.add_subcommand("ablate", "train and score ablation variants");
  abl->add_option("--config", config, "base run config JSON");
  abl->add_option("--data", data, "corpus root")->required();
  abl->add_option("--out", out, "output directory")->required();
  abl->add_option("--val-count", val_count, "held-out pairs");
  abl->add_option("--only", only, "restrict to these variants");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*gen) return cmd_gen(out, count, size, seed);
    if (*trn) return cmd_train(config, data, out, resume, stop_after);
    if (*ev) return cmd_eval(ckpt, data, as_json);
    if (*inf) return cmd_infer(ckpt, in, out);
    if (*cx) return cmd_complexity(config, hw, as_json);
    if (*ini) return cmd_init(config, out, identity);
    if (*abl) return cmd_ablate(config, data, out, val_count, only);
  } catch (const CLI::ValidationError &e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NumericError &e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
