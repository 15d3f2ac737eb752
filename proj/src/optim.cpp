// SPDX-License-Identifier: Apache-2.0

#include "urwkv/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace urwkv {

double cosine_lr(std::size_t step, std::size_t total, double lr_max,
                 double lr_min) {
  if (total == 0) {
    return lr_max;
  }
  const double s = static_cast<double>(std::min(step, total));
  const double t = static_cast<double>(total);
  return lr_min +
         0.5 * (lr_max - lr_min) * (1.0 + std::cos(std::numbers::pi * s / t));
}

Adam::Adam(ParamList params, AdamOptions options)
    : params_(std::move(params)), options_(options) {
  for (const auto &[name, t] : params_) {
    m_.emplace_back(t.numel(), 0.0);
    v_.emplace_back(t.numel(), 0.0);
  }
}

void Adam::step(double lr) {
  for (const auto &[name, t] : params_) {
    if (!t.has_grad()) {
      throw std::logic_error("adam step before backward: parameter " + name +
                             " has no gradient");
    }
  }
  ++step_;
  const double b1 = options_.beta1;
  const double b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (std::size_t p = 0; p < params_.size(); ++p) {
    Tensor t = params_[p].second;
    const auto g = t.grad();
    auto x = t.mutable_data();
    auto &m = m_[p];
    auto &v = v_[p];
    for (std::size_t i = 0; i < x.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      const double mh = m[i] / c1;
      const double vh = v[i] / c2;
      x[i] -= lr * mh / (std::sqrt(vh) + options_.eps);
    }
  }
}

void Adam::zero_grad() {
  for (auto &[name, t] : params_) {
    t.zero_grad();
  }
}

void Adam::export_state(std::vector<CheckpointEntry> &out) const {
  for (std::size_t p = 0; p < params_.size(); ++p) {
    const auto &[name, t] = params_[p];
    out.push_back({"adam.m." + name, t.shape(), m_[p]});
    out.push_back({"adam.v." + name, t.shape(), v_[p]});
  }
}

void Adam::import_state(const Checkpoint &ckpt, std::size_t step) {
  std::vector<const CheckpointEntry *> ms, vs;
  for (const auto &[name, t] : params_) {
    for (const char *kind : {"adam.m.", "adam.v."}) {
      const CheckpointEntry *e = ckpt.find(kind + name);
      if (e == nullptr || e->shape != t.shape()) {
        throw CheckpointError("optimizer state for " + name +
                              (e == nullptr ? " is missing" : " has shape " +
                                                   shape_str(e->shape)));
      }
      (kind[5] == 'm' ? ms : vs).push_back(e);
    }
  }
  for (std::size_t p = 0; p < params_.size(); ++p) {
    m_[p] = ms[p]->values;
    v_[p] = vs[p]->values;
  }
  step_ = step;
}

} // namespace urwkv
