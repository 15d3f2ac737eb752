// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "urwkv/complexity.hpp"
#include "urwkv/model.hpp"

using namespace urwkv;

namespace {

UrwkvConfig variant(bool lan, bool ssf) {
  UrwkvConfig c;
  c.lan_enabled = lan;
  c.ssf_enabled = ssf;
  return c;
}

} // namespace

TEST_CASE("analytic counts match the instantiated model per category") {
  for (bool lan : {false, true}) {
    for (bool ssf : {false, true}) {
      const UrwkvConfig cfg = variant(lan, ssf);
      const UrwkvModel model(cfg);
      const ComplexityReport rep = analyze_complexity(cfg, 256, 256);
      const auto counted = params_by_category(model.parameters());
      CHECK(rep.total_params == count_params(model));
      for (const std::string &cat : complexity_categories()) {
        INFO(cat);
        const auto it = counted.find(cat);
        const std::size_t n = it == counted.end() ? 0 : it->second;
        CHECK(rep.categories.at(cat).params == n);
      }
    }
  }
}

TEST_CASE("every parameter name maps to a known category") {
  UrwkvConfig cfg;
  cfg.base_channels = 8;
  cfg.n1 = 1;
  cfg.n2 = 1;
  for (const auto &[name, t] : UrwkvModel(cfg).parameters()) {
    INFO(name);
    const std::string cat = param_category(name);
    CHECK(std::find(complexity_categories().begin(),
                    complexity_categories().end(),
                    cat) != complexity_categories().end());
  }
  CHECK(param_category("mystery.weight") == "other");
}

TEST_CASE("ablation switches order parameter counts") {
  const std::size_t base = analyze_complexity(variant(false, false), 64, 64).total_params;
  const std::size_t plus_ssf = analyze_complexity(variant(false, true), 64, 64).total_params;
  const std::size_t plus_lan = analyze_complexity(variant(true, false), 64, 64).total_params;
  const std::size_t full = analyze_complexity(variant(true, true), 64, 64).total_params;
  CHECK(base < plus_ssf);
  CHECK(plus_ssf < plus_lan);
  CHECK(plus_lan <= full);
  CHECK(full - plus_lan == plus_ssf - base);
}

TEST_CASE("full config lands near the reference budget") {
  const ComplexityReport rep = analyze_complexity(variant(true, true), 256, 256);
  CHECK(std::abs(static_cast<double>(rep.total_params) - 2.25e6) < 0.15 * 2.25e6);
  // MACs grow with area; parameters do not.
  const ComplexityReport half = analyze_complexity(variant(true, true), 128, 128);
  CHECK(half.total_params == rep.total_params);
  CHECK(half.total_macs < rep.total_macs / 3);
  CHECK(half.total_macs > rep.total_macs / 5);
}

TEST_CASE("sizes are padded to a multiple of four") {
  const ComplexityReport rep = analyze_complexity(variant(true, true), 101, 67);
  CHECK(rep.height == 104);
  CHECK(rep.width == 68);
  UrwkvConfig small;
  small.base_channels = 8;
  CHECK(count_flops(UrwkvModel(small), 101, 67) ==
        analyze_complexity(small, 104, 68).total_macs);
}

TEST_CASE("MACs of a single stem conv follow the formula") {
  // The stem is 3 -> C, 3x3, at full resolution.
  const ComplexityReport rep = analyze_complexity(variant(false, false), 8, 8);
  const CategoryCost stem_head = rep.categories.at("stem_head");
  const std::uint64_t expect = 2ull * 3 * 32 * 9 * 8 * 8;
  CHECK(stem_head.macs == expect);
  CHECK(stem_head.params == 32 * (27 + 1) + 3 * (32 * 9 + 1));
}
