// SPDX-License-Identifier: Apache-2.0
//
// Acceptance run: one PASS/FAIL line per criterion, with the measured
// numbers behind each verdict. Exit status is the number of failures.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "gradient_cases.hpp"
#include "oracles.hpp"
#include "urwkv/checkpoint.hpp"
#include "urwkv/complexity.hpp"
#include "urwkv/corpus.hpp"
#include "urwkv/lan.hpp"
#include "urwkv/metrics.hpp"
#include "urwkv/model.hpp"
#include "urwkv/rwkv_ops.hpp"
#include "urwkv/trainer.hpp"

using namespace urwkv;
using oracle::random_tensor;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string &what) {
    if (!ok) {
      pass = false;
      detail += "[FAILED] ";
    }
    detail += what + "; ";
  }
};

std::string fmt(const char *f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

double max_abs_diff(std::span<const double> a, const std::vector<double> &b) {
  double e = 0.0;
  for (std::size_t i = 0; i < b.size(); ++i) e = std::max(e, std::abs(a[i] - b[i]));
  return e;
}

UrwkvConfig toy_config() {
  UrwkvConfig c;
  c.base_channels = 8;
  c.n1 = 2;
  c.n2 = 1;
  return c;
}

// ------------------------------------------------------------------ 1
Verdict gradient_integrity() {
  Verdict v;
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<std::pair<const char *, std::function<double()>>> cases = {
      {"q_shift", [] { return gradcase::q_shift_case(5); }},
      {"msa_absorb", [] { return gradcase::msa_absorb_case(5); }},
      {"bi_wkv", [] { return gradcase::bi_wkv_case(5); }},
      {"lan_forward", [] { return gradcase::lan_forward_case(5); }},
      {"predict_gate", [] { return gradcase::predict_gate_case(5); }},
      {"fuse_skip", [] { return gradcase::fuse_skip_case(5); }},
      {"composite_loss", [] { return gradcase::composite_loss_case(5); }}};
  for (const auto &[name, f] : cases) {
    const double err = f();
    v.require(err < 1e-4, std::string(name) + " " + fmt("%.2e", err));
  }
  const double t = seconds_since(t0);
  v.require(t < 120.0, fmt("%.1fs", t));
  return v;
}

// ------------------------------------------------------------------ 2
Verdict bi_wkv_oracle() {
  Verdict v;
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(2024);
  double worst = 0.0;
  for (std::size_t T : {1, 2, 4, 16, 64}) {
    const std::size_t C = 6;
    const Tensor k = random_tensor({T, C}, rng, -3, 3, false);
    const Tensor val = random_tensor({T, C}, rng, -1, 1, false);
    const BiWkvParams p{random_tensor({C}, rng, -8, 8, false),
                        random_tensor({C}, rng, -2, 2, false)};
    const auto expect =
        oracle::bi_wkv_naive(oracle::values(k), oracle::values(val),
                             oracle::values(p.w), oracle::values(p.u), T, C);
    const Tensor out = bi_wkv(k, val, p);
    worst = std::max(worst, max_abs_diff(out.data(), expect));
    if (T == 1) {
      v.require(std::memcmp(out.data().data(), val.data().data(),
                            C * sizeof(double)) == 0,
                "T=1 returns v exactly");
    }
  }
  v.require(worst < 1e-10, "max error " + fmt("%.2e", worst));
  v.require(seconds_since(t0) < 60.0, fmt("%.2fs", seconds_since(t0)));
  return v;
}

// ------------------------------------------------------------------ 3
Verdict ema_closed_form() {
  Verdict v;
  std::mt19937_64 rng(3);
  IntraStateEMA ema(0.5);
  std::vector<std::vector<double>> states;
  double worst = 0.0;
  for (int t = 1; t <= 8; ++t) {
    const Tensor s = random_tensor({8, 5, 5}, rng, -3, 3, false);
    states.push_back(oracle::values(s));
    const Tensor agg = ema.absorb(s);
    worst = std::max(worst, max_abs_diff(agg.data(),
                                         oracle::ema_closed_form(states, 0.5)));
  }
  v.require(worst < 1e-12, "max error over t=1..8 " + fmt("%.2e", worst));
  return v;
}

// ------------------------------------------------------------------ 4
Verdict lan_degeneracy() {
  Verdict v;
  std::mt19937_64 rng(4);
  double worst = 0.0;
  for (std::size_t t = 1; t <= 6; ++t) {
    const std::size_t c = 16, c_max = 64;
    StageStateRegistry reg(c_max);
    for (std::size_t i = 0; i + 1 < t; ++i)
      reg.record(random_tensor({c_max >> (i % 3), 4, 4}, rng, -1, 1, false));
    LanParams p = gradcase::random_lan(c, t, c_max, rng);
    p.zero_modulator();
    const Tensor x = random_tensor({c, 6, 7}, rng, -3, 3, false);
    const auto expect = oracle::layer_norm(oracle::values(x), c, 6, 7,
                                           oracle::values(p.gamma),
                                           oracle::values(p.beta), 1e-5);
    worst = std::max(worst, max_abs_diff(lan_forward(x, reg, p).data(), expect));
  }
  v.require(worst < 1e-10, "zeroed modulator vs LayerNorm " + fmt("%.2e", worst));

  double extreme = 0.0;
  std::size_t draws = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t c = 8, c_max = 32, t = 1 + trial % 6;
    StageStateRegistry reg(c_max);
    for (std::size_t i = 0; i + 1 < t; ++i)
      reg.record(random_tensor({c_max, 3, 3}, rng, -5, 5, false));
    LanParams p = gradcase::random_lan(c, t, c_max, rng);
    const double spread = trial < 100 ? 1.0 : 100.0;
    p.mlp_w2 = random_tensor(p.mlp_w2.shape(), rng, -spread, spread);
    const Tensor x = random_tensor({c, 4, 4}, rng, -10, 10, false);
    const Tensor delta = predict_modulator(x, reg, p);
    for (double d : delta.data()) {
      extreme = std::max(extreme, std::abs(d));
      ++draws;
    }
  }
  v.require(extreme < 1.0, "max |gamma_hat - gamma| " + fmt("%.17g", extreme) +
                               " over " + std::to_string(draws) + " channels");
  return v;
}

// ------------------------------------------------------------------ 5
Verdict architecture() {
  Verdict v;
  UrwkvModel model{UrwkvConfig{}};
  std::mt19937_64 rng(5);
  for (auto [h, w] : {std::pair<std::size_t, std::size_t>{32, 32},
                      {64, 48}, {101, 67}, {128, 128}}) {
    NoGradGuard guard;
    const ForwardResult r =
        model.forward_full(random_tensor({3, h, w}, rng, 0, 1, false));
    const std::string tag = std::to_string(h) + "x" + std::to_string(w);
    v.require(r.output.shape() == Shape{3, h, w}, tag + " shape");
    v.require(r.registry_size == 6,
              tag + " registry " + std::to_string(r.registry_size));
  }
  model.zero_residual_branches();
  const Tensor x = random_tensor({3, 37, 29}, rng, -0.1, 1.1, false);
  NoGradGuard guard;
  const Tensor y = model.forward(x);
  bool identity = true;
  for (std::size_t i = 0; i < x.numel(); ++i)
    identity = identity && y.data()[i] == std::clamp(x.data()[i], 0.0, 1.0);
  v.require(identity, "zeroed residual branches give clamp(x)");
  return v;
}

// ------------------------------------------------------------------ 6
Verdict complexity() {
  Verdict v;
  UrwkvConfig full;
  UrwkvConfig base;
  base.lan_enabled = false;
  base.ssf_enabled = false;
  UrwkvConfig lan_only = base;
  lan_only.lan_enabled = true;
  const std::size_t n_full = count_params(UrwkvModel(full));
  const std::size_t n_base = count_params(UrwkvModel(base));
  const std::size_t n_lan = count_params(UrwkvModel(lan_only));
  const double delta = static_cast<double>(n_lan) - static_cast<double>(n_base);
  auto rel = [](double x, double ref) { return (x - ref) / ref; };
  v.require(std::abs(rel(n_full, 2.25e6)) <= 0.15,
            "full " + std::to_string(n_full) + " (" +
                fmt("%+.1f%%", 100 * rel(n_full, 2.25e6)) + " vs 2.25M)");
  v.require(std::abs(rel(n_base, 1.64e6)) <= 0.15,
            "baseline " + std::to_string(n_base) + " (" +
                fmt("%+.1f%%", 100 * rel(n_base, 1.64e6)) + " vs 1.64M)");
  v.require(std::abs(delta - 0.60e6) <= 0.15e6,
            "LAN delta " + fmt("%.0f", delta) + " (vs 0.60M)");
  v.require(n_base < n_full, "baseline < full");

  const ComplexityReport rep = analyze_complexity(full, 256, 256);
  v.require(rep.total_params == n_full, "analytic count equals instantiated");
  std::string modules = "per-module params:";
  for (const std::string &cat : complexity_categories())
    modules += " " + cat + "=" + std::to_string(rep.categories.at(cat).params);
  v.require(true, modules);
  v.require(true, "MACs at 256x256 " +
                      fmt("%.2fG", static_cast<double>(rep.total_macs) * 1e-9));
  return v;
}

// ------------------------------------------------------------------ 7
Verdict ablation_topology() {
  Verdict v;
  std::mt19937_64 rng(7);
  const Tensor x = random_tensor({3, 16, 16}, rng, 0, 1, false);
  auto run = [&](const UrwkvConfig &c) {
    NoGradGuard guard;
    return UrwkvModel(c).forward_full(x).trace;
  };
  UrwkvConfig toy = toy_config();
  const std::size_t sub_blocks = 2 * (3 * toy.n1 + 3 * toy.n2);

  // baseline, +SSF, +LAN, full.
  UrwkvConfig cfg[4] = {toy, toy, toy, toy};
  cfg[0].lan_enabled = false; cfg[0].ssf_enabled = false;
  cfg[1].lan_enabled = false; cfg[1].ssf_enabled = true;
  cfg[2].lan_enabled = true;  cfg[2].ssf_enabled = false;
  std::size_t n[4];
  for (int i = 0; i < 4; ++i) n[i] = count_params(UrwkvModel(cfg[i]));
  v.require(n[0] < n[1] && n[1] < n[2] && n[2] < n[3],
            "params " + std::to_string(n[0]) + " < " + std::to_string(n[1]) +
                " < " + std::to_string(n[2]) + " < " + std::to_string(n[3]));
  v.require(n[3] - n[2] == n[1] - n[0], "SSF delta independent of LAN");
  const ForwardTrace t0 = run(cfg[0]), t3 = run(cfg[3]);
  v.require(t0.lan_plain == sub_blocks && t0.lan_modulated == 0 &&
                t0.cat_skips == 3 && t0.ssf_gates == 0,
            "baseline runs plain LN and cat skips");
  v.require(t3.lan_modulated == sub_blocks && t3.lan_plain == 0 &&
                t3.ssf_gates == 3 && t3.cat_skips == 0,
            "full runs LAN and SSF");
  v.require(run(cfg[1]).ssf_gates == 3 && run(cfg[2]).lan_modulated == sub_blocks,
            "single-switch variants take their paths");

  // single, multi, Q-shift, single + Q-shift, multi + Q-shift.
  using SA = StateAggregation;
  const TokenShiftMode modes[5] = {{SA::kSingle, false}, {SA::kMulti, false},
                                   {SA::kNone, true}, {SA::kSingle, true},
                                   {SA::kMulti, true}};
  for (int i = 0; i < 5; ++i) {
    UrwkvConfig c = toy;
    c.token_shift = modes[i];
    const ForwardTrace t = run(c);
    const std::size_t expect_single = modes[i].aggregation == SA::kSingle ? sub_blocks : 0;
    const std::size_t expect_multi = modes[i].aggregation == SA::kMulti ? sub_blocks : 0;
    const std::size_t expect_q = modes[i].qshift ? sub_blocks : 0;
    const bool ok = t.single_state_mixes == expect_single &&
                    t.multi_state_absorbs == expect_multi &&
                    t.qshift_calls == expect_q &&
                    t.shift_skipped == sub_blocks - expect_q &&
                    count_params(UrwkvModel(c)) == n[3];
    v.require(ok, std::string("shift variant ") + "abcde"[i]);
  }

  // Skip variants: Add, Cat, multi-state Cat, SSF.
  UrwkvConfig add = toy, multi = toy;
  add.ssf_enabled = false; add.naive_skip = NaiveSkip::kAdd;
  multi.ssf_enabled = false; multi.naive_skip = NaiveSkip::kMultiCat;
  const std::size_t n_add = count_params(UrwkvModel(add));
  const std::size_t n_multi = count_params(UrwkvModel(multi));
  v.require(n_add < n[2] && n[2] < n_multi && run(add).add_skips == 3 &&
                run(multi).multi_cat_skips == 3,
            "skip variants add < cat < multi-cat");
  return v;
}

// ------------------------------------------------------------------ 8
Verdict desk_learning() {
  Verdict v;
  const auto t0 = std::chrono::steady_clock::now();

  {
    RunConfig rc;
    rc.model = toy_config();
    rc.train.steps = 500;
    rc.train.lr_max = 1e-3;
    rc.train.lr_min = 1e-3;
    rc.train.batch_size = 2;
    rc.train.crop_size = 32;
    rc.train.augment = false;
    rc.train.checkpoint_every = 0;
    std::vector<ImagePair> pairs;
    for (std::size_t i = 0; i < 2; ++i) pairs.push_back(generate_pair({2, 32, 7}, i));
    UrwkvModel model(rc.model);
    const double input = evaluate(UrwkvModel(rc.model), pairs).first;
    const TrainResult r = train(model, rc, pairs);
    const double final_psnr = r.log.back().psnr;
    v.require(final_psnr > 40.0,
              "overfit 2x32x32 in 500 steps: train PSNR " +
                  fmt("%.2f dB", final_psnr) + " (init " + fmt("%.2f dB", input) +
                  ", target > 40)");
  }
  {
    RunConfig rc;
    rc.model = toy_config();
    rc.train.steps = 2000;
    rc.train.lr_max = 1e-3;
    rc.train.lr_min = 1e-6;
    rc.train.batch_size = 2;
    rc.train.crop_size = 48;
    rc.train.augment = true;
    rc.train.checkpoint_every = 0;
    std::vector<ImagePair> pairs;
    for (std::size_t i = 0; i < 64; ++i) pairs.push_back(generate_pair({64, 64, 2025}, i));
    const std::vector<ImagePair> train_set(pairs.begin(), pairs.begin() + 56);
    const std::vector<ImagePair> held(pairs.begin() + 56, pairs.end());
    double degraded = 0.0;
    for (const ImagePair &p : held) degraded += psnr(p.degraded, p.reference);
    degraded /= static_cast<double>(held.size());
    UrwkvModel model(rc.model);
    train(model, rc, train_set);
    const double restored = evaluate(model, held).first;
    v.require(restored - degraded >= 4.0,
              "held-out PSNR " + fmt("%.2f", degraded) + " -> " +
                  fmt("%.2f dB", restored) + " (gain " +
                  fmt("%.2f", restored - degraded) + ", target >= 4)");
  }
  const double t = seconds_since(t0);
  v.require(t < 1200.0, fmt("%.0fs", t));
  return v;
}

// ------------------------------------------------------------------ 9
Verdict metric_oracles() {
  Verdict v;
  std::mt19937_64 rng(9);
  double psnr_err = 0.0, ssim_err = 0.0;
  for (int i = 0; i < 4; ++i) {
    const std::size_t h = 11 + 5 * i, w = 13 + 3 * i;
    const Tensor a = random_tensor({3, h, w}, rng, 0, 1, false);
    Tensor b = a.clone();
    for (double &x : b.mutable_data())
      x = std::clamp(x + std::uniform_real_distribution<double>(-0.15, 0.15)(rng), 0.0, 1.0);
    const double m = oracle::mse(oracle::values(a), oracle::values(b));
    psnr_err = std::max(psnr_err, std::abs(psnr(a, b) - 10 * std::log10(1 / m)));
    ssim_err = std::max(ssim_err, std::abs(ssim(a, b) - oracle::ssim_bruteforce(
                                                            oracle::values(a),
                                                            oracle::values(b), 3, h, w)));
  }
  v.require(psnr_err < 1e-8, "PSNR vs oracle " + fmt("%.2e", psnr_err));
  v.require(ssim_err < 1e-8, "SSIM vs oracle " + fmt("%.2e", ssim_err));
  const Tensor a = random_tensor({3, 24, 24}, rng, 0, 0.9, false);
  const double p20 = psnr(a, add_scalar(a, 0.1));
  v.require(std::abs(p20 - 20.0) < 1e-9, "psnr(a, a+0.1) = " + fmt("%.15f", p20));
  v.require(ssim(a, a) == 1.0, "ssim(a, a) = " + fmt("%.17g", ssim(a, a)));
  return v;
}

// ------------------------------------------------------------------ 10
Verdict determinism() {
  Verdict v;
  RunConfig rc;
  rc.model = toy_config();
  rc.model.seed = 10;
  rc.train.steps = 50;
  rc.train.lr_max = 1e-3;
  rc.train.batch_size = 2;
  rc.train.crop_size = 24;
  std::vector<ImagePair> pairs;
  for (std::size_t i = 0; i < 4; ++i) pairs.push_back(generate_pair({4, 32, 10}, i));
  UrwkvModel a(rc.model), b(rc.model);
  const TrainResult ra = train(a, rc, pairs), rb = train(b, rc, pairs);
  bool same = ra.log.size() == 50 && rb.log.size() == 50;
  for (std::size_t i = 0; same && i < ra.log.size(); ++i)
    same = csv_row(ra.log[i]) == csv_row(rb.log[i]);
  v.require(same, "50-step logs identical");

  const fs::path dir = fs::temp_directory_path() / "urwkv_acceptance";
  fs::create_directories(dir);
  const std::string p1 = (dir / "a.ckpt").string(), p2 = (dir / "b.ckpt").string();
  save_model(p1, a);
  const UrwkvModel back = load_model(p1);
  const ParamList pa = a.parameters(), pb = back.parameters();
  bool exact = pa.size() == pb.size();
  for (std::size_t i = 0; exact && i < pa.size(); ++i)
    exact = std::memcmp(pa[i].second.data().data(), pb[i].second.data().data(),
                        pa[i].second.numel() * sizeof(double)) == 0;
  save_model(p2, back);
  exact = exact && fs::file_size(p1) == fs::file_size(p2);
  v.require(exact, "checkpoint round-trip bit-exact");
  return v;
}

} // namespace

int main() {
  const std::vector<std::pair<const char *, std::function<Verdict()>>> criteria = {
      {"gradient integrity", gradient_integrity},
      {"bi-wkv oracle equivalence", bi_wkv_oracle},
      {"EMA closed form", ema_closed_form},
      {"LAN degeneracy and bound", lan_degeneracy},
      {"architecture contracts", architecture},
      {"complexity bookkeeping", complexity},
      {"ablation topology", ablation_topology},
      {"desk-scale learning", desk_learning},
      {"metric oracles", metric_oracles},
      {"determinism and round-trip", determinism}};
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception &e) {
      v.pass = false;
      v.detail = std::string("exception: ") + e.what();
    }
    failures += v.pass ? 0 : 1;
    std::printf("criterion %2zu %s: %s (%.1fs) %s\n", i + 1,
                v.pass ? "PASS" : "FAIL", criteria[i].first,
                seconds_since(t0), v.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria failed\n", failures, criteria.size());
  return failures;
}
