// Copyright 2026 The MixPro Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mixpro/tensor.hpp"

namespace mixpro::ad {

struct AdamWHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.05;
};

/// First/second moments per parameter and the shared step counter.
struct OptimizerState {
  AdamWHyper hyper;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::uint64_t t = 0;
};

/// One AdamW update of every tensor in `params` from its grad() buffer.
///
/// Weight decay is decoupled: θ ← θ·(1 − lr·wd) before the bias-corrected
/// Adam step. `decay` selects which parameters are decayed (all when
/// empty). Moments are allocated lazily on the first call.
void adamw_step(std::span<Tensor* const> params, OptimizerState& state,
                std::span<const bool> decay = {});

/// Linear warm-up from 0 to `base_lr` over `warmup_steps`, then cosine decay
/// to `min_lr` at `total_steps`.
double lr_at_step(std::uint64_t step, std::uint64_t warmup_steps, std::uint64_t total_steps,
                  double base_lr, double min_lr);

}  // namespace mixpro::ad
