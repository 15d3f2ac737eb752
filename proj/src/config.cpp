// SPDX-License-Identifier: Apache-2.0

#include "urwkv/config.hpp"

#include <cmath>
#include <fstream>
#include <set>

namespace urwkv {

using nlohmann::json;

NaiveSkip parse_naive_skip(const std::string &name) {
  if (name == "cat") return NaiveSkip::kCat;
  if (name == "add") return NaiveSkip::kAdd;
  if (name == "multi_cat") return NaiveSkip::kMultiCat;
  throw ConfigError("unknown skip_mode '" + name +
                    "' (expected cat, add or multi_cat)");
}

std::string to_string(NaiveSkip skip) {
  switch (skip) {
  case NaiveSkip::kCat:
    return "cat";
  case NaiveSkip::kAdd:
    return "add";
  case NaiveSkip::kMultiCat:
    return "multi_cat";
  }
  return "cat";
}

std::size_t UrwkvConfig::channel_hidden(std::size_t channels) const {
  return static_cast<std::size_t>(
      std::lround(channel_mix_ratio * static_cast<double>(channels)));
}

std::size_t UrwkvConfig::lan_hidden(std::size_t channels) const {
  return static_cast<std::size_t>(
      std::lround(lan_mlp_ratio * static_cast<double>(channels)));
}

void UrwkvConfig::validate() const {
  if (base_channels == 0 || base_channels % 4 != 0) {
    throw ConfigError("base_channels must be a positive multiple of 4");
  }
  if (n1 == 0 || n2 == 0) {
    throw ConfigError("n1 and n2 must be positive");
  }
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw ConfigError("alpha must lie in [0, 1]");
  }
  if (!(channel_mix_ratio > 0.0) || channel_hidden(base_channels) == 0) {
    throw ConfigError("channel_mix_ratio must be positive");
  }
  if (!(lan_mlp_ratio > 0.0) || lan_hidden(base_channels) == 0) {
    throw ConfigError("lan_mlp_ratio must be positive");
  }
  if (ssf_branch_width == 0) {
    throw ConfigError("ssf_branch_width must be positive");
  }
  if (loss.l1 < 0.0 || loss.ssim < 0.0 || loss.perceptual < 0.0) {
    throw ConfigError("loss weights must be nonnegative");
  }
}

namespace {

template <class T> void read(const json &doc, const char *key, T &out) {
  if (doc.contains(key)) {
    try {
      out = doc.at(key).get<T>();
    } catch (const json::exception &e) {
      throw ConfigError(std::string("config key '") + key +
                        "' has the wrong type: " + e.what());
    }
  }
}

const std::set<std::string> &known_keys() {
  static const std::set<std::string> keys = {
      "base_channels",   "n1",           "n2",
      "alpha",           "lan_enabled",  "ssf_enabled",
      "skip_mode",       "token_aggregation", "qshift",
      "channel_mix_ratio", "lan_mlp_ratio", "ssf_branch_width",
      "w_l1",            "w_ssim",       "w_perceptual",
      "seed",            "steps",        "lr_max",
      "lr_min",          "adam_beta1",   "adam_beta2",
      "adam_eps",        "batch_size",   "crop_size",
      "augment",         "log_every",    "checkpoint_every",
      "val_count"};
  return keys;
}

} // namespace

RunConfig parse_run_config(const json &doc) {
  if (!doc.is_object()) {
    throw ConfigError("config must be a JSON object");
  }
  std::vector<std::string> unknown;
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    if (known_keys().count(it.key()) == 0) {
      unknown.push_back(it.key());
    }
  }
  if (!unknown.empty()) {
    std::string msg = "unknown config keys:";
    for (const auto &k : unknown) {
      msg += " " + k;
    }
    throw ConfigError(msg);
  }
  RunConfig rc;
  UrwkvConfig &m = rc.model;
  read(doc, "base_channels", m.base_channels);
  read(doc, "n1", m.n1);
  read(doc, "n2", m.n2);
  read(doc, "alpha", m.alpha);
  read(doc, "lan_enabled", m.lan_enabled);
  read(doc, "ssf_enabled", m.ssf_enabled);
  std::string skip = to_string(m.naive_skip);
  read(doc, "skip_mode", skip);
  m.naive_skip = parse_naive_skip(skip);
  std::string agg = to_string(m.token_shift.aggregation);
  read(doc, "token_aggregation", agg);
  try {
    m.token_shift.aggregation = parse_aggregation(agg);
  } catch (const std::invalid_argument &e) {
    throw ConfigError(e.what());
  }
  read(doc, "qshift", m.token_shift.qshift);
  read(doc, "channel_mix_ratio", m.channel_mix_ratio);
  read(doc, "lan_mlp_ratio", m.lan_mlp_ratio);
  read(doc, "ssf_branch_width", m.ssf_branch_width);
  read(doc, "w_l1", m.loss.l1);
  read(doc, "w_ssim", m.loss.ssim);
  read(doc, "w_perceptual", m.loss.perceptual);
  read(doc, "seed", m.seed);

  TrainConfig &t = rc.train;
  read(doc, "steps", t.steps);
  read(doc, "lr_max", t.lr_max);
  read(doc, "lr_min", t.lr_min);
  read(doc, "adam_beta1", t.adam_beta1);
  read(doc, "adam_beta2", t.adam_beta2);
  read(doc, "adam_eps", t.adam_eps);
  read(doc, "batch_size", t.batch_size);
  read(doc, "crop_size", t.crop_size);
  read(doc, "augment", t.augment);
  read(doc, "log_every", t.log_every);
  read(doc, "checkpoint_every", t.checkpoint_every);
  read(doc, "val_count", t.val_count);

  m.validate();
  if (t.batch_size == 0 || t.crop_size < 16 || t.log_every == 0) {
    throw ConfigError("batch_size and log_every must be positive and "
                      "crop_size at least 16");
  }
  if (!(t.lr_max >= t.lr_min && t.lr_min >= 0.0)) {
    throw ConfigError("need lr_max >= lr_min >= 0");
  }
  return rc;
}

RunConfig load_run_config(const std::string &path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot open config file " + path);
  }
  json doc;
  try {
    in >> doc;
  } catch (const json::exception &e) {
    throw ConfigError("config " + path + " is not valid JSON: " + e.what());
  }
  return parse_run_config(doc);
}

json to_json(const UrwkvConfig &m) {
  return json{{"base_channels", m.base_channels},
              {"n1", m.n1},
              {"n2", m.n2},
              {"alpha", m.alpha},
              {"lan_enabled", m.lan_enabled},
              {"ssf_enabled", m.ssf_enabled},
              {"skip_mode", to_string(m.naive_skip)},
              {"token_aggregation", to_string(m.token_shift.aggregation)},
              {"qshift", m.token_shift.qshift},
              {"channel_mix_ratio", m.channel_mix_ratio},
              {"lan_mlp_ratio", m.lan_mlp_ratio},
              {"ssf_branch_width", m.ssf_branch_width},
              {"w_l1", m.loss.l1},
              {"w_ssim", m.loss.ssim},
              {"w_perceptual", m.loss.perceptual},
              {"seed", m.seed}};
}

json to_json(const RunConfig &config) {
  json doc = to_json(config.model);
  const TrainConfig &t = config.train;
  doc["steps"] = t.steps;
  doc["lr_max"] = t.lr_max;
  doc["lr_min"] = t.lr_min;
  doc["adam_beta1"] = t.adam_beta1;
  doc["adam_beta2"] = t.adam_beta2;
  doc["adam_eps"] = t.adam_eps;
  doc["batch_size"] = t.batch_size;
  doc["crop_size"] = t.crop_size;
  doc["augment"] = t.augment;
  doc["log_every"] = t.log_every;
  doc["checkpoint_every"] = t.checkpoint_every;
  doc["val_count"] = t.val_count;
  return doc;
}

UrwkvConfig model_config_from_json(const json &doc) {
  return parse_run_config(doc).model;
}

} // namespace urwkv
