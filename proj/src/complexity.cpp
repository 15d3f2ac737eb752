// SPDX-License-Identifier: Apache-2.0

#include "urwkv/complexity.hpp"

#include <array>

namespace urwkv {

namespace {

using u64 = std::uint64_t;

std::size_t conv_params(std::size_t ci, std::size_t co, std::size_t k) {
  return co * (ci * k * k + 1);
}

u64 conv_macs(std::size_t ci, std::size_t co, std::size_t k, std::size_t h,
              std::size_t w) {
  return static_cast<u64>(co) * ci * k * k * h * w;
}

class Accumulator {
public:
  void add(const std::string &cat, std::size_t params, u64 macs) {
    CategoryCost &c = report.categories[cat];
    c.params += params;
    c.macs += macs;
    report.total_params += params;
    report.total_macs += macs;
  }
  ComplexityReport report;
};

void add_lan(Accumulator &acc, const UrwkvConfig &cfg, std::size_t c,
             std::size_t t) {
  acc.add("norm_affine", 2 * c, 0);
  if (!cfg.lan_enabled) {
    return;
  }
  const std::size_t c_max = 4 * cfg.base_channels;
  const std::size_t hid = cfg.lan_hidden(c);
  std::size_t params = 0;
  u64 macs = 0;
  for (std::size_t r : LanParams::kKernelWidths) {
    params += t * (t * r + 1);
    macs += static_cast<u64>(t) * t * r * c_max;
  }
  params += 3 * t + 1;
  macs += static_cast<u64>(3) * t * c_max;
  params += c * hid + hid + hid * c + c;
  macs += static_cast<u64>(2) * c * hid;
  acc.add("lan_modulator", params, macs);
}

void add_block(Accumulator &acc, const UrwkvConfig &cfg, std::size_t c,
               std::size_t t_states, u64 tokens) {
  add_lan(acc, cfg, c, t_states);
  add_lan(acc, cfg, c, t_states);
  acc.add("spatial_mix", 4 * c * c + 2 * c,
          tokens * 4 * c * c + tokens * 4 * c);
  const std::size_t hid = cfg.channel_hidden(c);
  acc.add("channel_mix", 2 * c * c + 2 * c * hid,
          tokens * (2 * c * c + 2 * c * hid));
}

} // namespace

ComplexityReport analyze_complexity(const UrwkvConfig &cfg, std::size_t h,
                                    std::size_t w) {
  Accumulator acc;
  for (const std::string &cat : complexity_categories()) {
    acc.report.categories[cat] = {};
  }
  const std::size_t ph = h + (4 - h % 4) % 4;
  const std::size_t pw = w + (4 - w % 4) % 4;
  acc.report.height = ph;
  acc.report.width = pw;
  const std::size_t c = cfg.base_channels;
  const std::array<std::size_t, 3> width{c, 2 * c, 4 * c};
  const std::array<std::size_t, 3> sh{ph, ph / 2, ph / 4};
  const std::array<std::size_t, 3> sw{pw, pw / 2, pw / 4};

  acc.add("stem_head", conv_params(3, c, 3), conv_macs(3, c, 3, ph, pw));
  acc.add("stem_head", conv_params(c, 3, 3), conv_macs(c, 3, 3, ph, pw));
  for (std::size_t s = 0; s < 3; ++s) {
    const u64 tokens = static_cast<u64>(sh[s]) * sw[s];
    for (std::size_t i = 0; i < cfg.n1; ++i) {
      add_block(acc, cfg, width[s], s + 1, tokens);
    }
    if (s < 2) {
      acc.add("sampling", conv_params(width[s], width[s + 1], 3),
              conv_macs(width[s], width[s + 1], 3, sh[s + 1], sw[s + 1]));
    }
  }
  for (std::size_t d = 0; d < 3; ++d) {
    const std::size_t s = 2 - d;
    const std::size_t wd = width[s];
    const u64 tokens = static_cast<u64>(sh[s]) * sw[s];
    std::size_t skip_in = 0;
    if (cfg.ssf_enabled || cfg.naive_skip == NaiveSkip::kCat) {
      skip_in = 2 * wd;
    } else if (cfg.naive_skip == NaiveSkip::kMultiCat) {
      skip_in = 7 * c + wd;
    }
    if (skip_in > 0) {
      acc.add("skip_projection", conv_params(skip_in, wd, 1),
              conv_macs(skip_in, wd, 1, sh[s], sw[s]));
    }
    if (cfg.ssf_enabled) {
      const std::size_t bw = cfg.ssf_branch_width;
      std::size_t params = 0;
      u64 macs = 0;
      for (std::size_t k : {1, 3, 5}) {
        params += conv_params(3, bw, k);
        macs += conv_macs(3, bw, k, sh[s], sw[s]);
      }
      params += conv_params(3 * bw, 1, 1);
      macs += conv_macs(3 * bw, 1, 1, sh[s], sw[s]);
      acc.add("ssf_gate", params, macs);
    }
    for (std::size_t i = 0; i < cfg.n2; ++i) {
      add_block(acc, cfg, wd, 4 + d, tokens);
    }
    if (d < 2) {
      acc.add("sampling", conv_params(wd, wd / 2, 3),
              conv_macs(wd, wd / 2, 3, sh[s - 1], sw[s - 1]));
    }
  }
  return acc.report;
}

std::string param_category(const std::string &name) {
  auto has = [&](const char *part) {
    return name.find(part) != std::string::npos;
  };
  if (name.rfind("stem.", 0) == 0 || name.rfind("head.", 0) == 0) {
    return "stem_head";
  }
  if (name.rfind("down", 0) == 0 || name.rfind("up", 0) == 0) {
    return "sampling";
  }
  if (has(".mod.")) return "lan_modulator";
  if (has(".gamma") || has(".beta")) return "norm_affine";
  if (has(".spatial.")) return "spatial_mix";
  if (has(".channel.")) return "channel_mix";
  if (has(".skip.")) return "skip_projection";
  if (has(".ssf.")) return "ssf_gate";
  return "other";
}

std::map<std::string, std::size_t> params_by_category(const ParamList &params) {
  std::map<std::string, std::size_t> out;
  for (const std::string &cat : complexity_categories()) {
    out[cat] = 0;
  }
  for (const auto &[name, tensor] : params) {
    out[param_category(name)] += tensor.numel();
  }
  return out;
}

std::size_t count_params(const UrwkvModel &model) {
  return count_elements(model.parameters());
}

std::uint64_t count_flops(const UrwkvModel &model, std::size_t h,
                          std::size_t w) {
  return analyze_complexity(model.config(), h, w).total_macs;
}

} // namespace urwkv
