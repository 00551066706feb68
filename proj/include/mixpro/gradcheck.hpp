// Copyright 2026 The MixPro Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mixpro/vit.hpp"

// Central finite-difference checks of every differentiable op and of the
// full ViT loss. Only forward values feed the numeric side.
namespace mixpro::gradcheck {

struct CheckResult {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t comparisons = 0;
};

struct SuiteReport {
  std::vector<CheckResult> checks;

  const CheckResult& worst() const;
  bool passed(double tolerance) const;
};

struct SuiteOptions {
  std::uint64_t seed = 0;
  int seeds = 1;
  double step = 1e-4;
  /// Coordinates sampled per parameter tensor in the model check, on top
  /// of one random directional derivative per tensor.
  std::size_t samples_per_tensor = 6;
  /// Check every coordinate of every parameter on the first seed.
  bool exhaustive_first_seed = true;
  /// Test hook: scales the analytic gradient of one op so the suite fails.
  std::string corrupt_op;
};

/// |a − n| / max(|a|, |n|, 1e-6)
double relative_error(double analytic, double numeric);

/// depth 2, d = 16, 2 heads, 16×16 input with 4-pixel patches (N = 16).
vit::ViTConfig toy_config();

SuiteReport run_op_checks(const SuiteOptions& options);
SuiteReport run_model_checks(const SuiteOptions& options);
/// Ops followed by the model; one CheckResult per op and per parameter
/// tensor, each aggregated over all seeds.
SuiteReport run_suite(const SuiteOptions& options);

}  // namespace mixpro::gradcheck
