// Copyright 2026 The MixPro Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "mixpro/optim.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "mixpro/error.hpp"

namespace mixpro::ad {

void adamw_step(std::span<Tensor* const> params, OptimizerState& state,
                std::span<const bool> decay) {
  const AdamWHyper& hp = state.hyper;
  if (!(hp.lr > 0.0)) throw ParameterError("AdamW learning rate must be positive");
  if (!decay.empty() && decay.size() != params.size()) {
    throw DimensionError("AdamW decay mask has " + std::to_string(decay.size()) +
                         " entries for " + std::to_string(params.size()) + " parameters");
  }
  if (state.m.empty()) {
    for (const Tensor* p : params) {
      state.m.emplace_back(p->size(), 0.0);
      state.v.emplace_back(p->size(), 0.0);
    }
  }
  if (state.m.size() != params.size()) {
    throw DimensionError("optimizer state does not match the parameter list");
  }
  state.t += 1;
  const double t = static_cast<double>(state.t);
  const double bias1 = 1.0 - std::pow(hp.beta1, t);
  const double bias2 = 1.0 - std::pow(hp.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    auto& m = state.m[i];
    auto& v = state.v[i];
    if (m.size() != p.size() || p.grad().size() != p.size()) {
      throw DimensionError("AdamW parameter " + std::to_string(i) +
                           " has mismatched moment or gradient size");
    }
    const double shrink = (decay.empty() || decay[i]) ? 1.0 - hp.lr * hp.weight_decay : 1.0;
    auto theta = p.data();
    auto g = p.grad();
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = hp.beta1 * m[j] + (1.0 - hp.beta1) * g[j];
      v[j] = hp.beta2 * v[j] + (1.0 - hp.beta2) * g[j] * g[j];
      const double m_hat = m[j] / bias1;
      const double v_hat = v[j] / bias2;
      theta[j] = theta[j] * shrink - hp.lr * m_hat / (std::sqrt(v_hat) + hp.eps);
    }
  }
}

double lr_at_step(std::uint64_t step, std::uint64_t warmup_steps, std::uint64_t total_steps,
                  double base_lr, double min_lr) {
  if (warmup_steps >= total_steps) {
    throw ParameterError("warm-up must be shorter than the schedule");
  }
  if (step > total_steps) throw ParameterError("step beyond the end of the schedule");
  if (step < warmup_steps) {
    return base_lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
  }
  const double progress = static_cast<double>(step - warmup_steps) /
                          static_cast<double>(total_steps - warmup_steps);
  return min_lr + 0.5 * (base_lr - min_lr) * (1.0 + std::cos(std::numbers::pi * progress));
}

}  // namespace mixpro::ad
