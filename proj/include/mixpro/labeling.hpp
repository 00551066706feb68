// Copyright 2026 The MixPro Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

// Label-space math for mixed samples. Everything here works on plain
// values; no gradient flows through a label.
namespace mixpro::labeling {

enum class AlphaKind { kPalCosine, kEqual, kLinear, kParabolic, kAreaOnly, kAttnOnly };

std::string to_string(AlphaKind kind);
/// "pal_cosine", "equal", "linear", "parabolic", "area_only", "attn_only".
AlphaKind parse_alpha_kind(const std::string& name);

struct AlphaStrategy {
  AlphaKind kind = AlphaKind::kPalCosine;
  std::size_t epoch = 0;         // T, 1-based progress through training
  std::size_t total_epochs = 1;  // T_max
};

struct LambdaWeights {
  double lambda_area = 0.0;
  double lambda_attn = 0.0;
  double alpha = 0.0;
  double lambda = 0.0;
};

/// λ_attn = A · ↓(M), clamped to [0, 1].
double lambda_attn(std::span<const double> attention, std::span<const double> down_mask);

/// Cosine similarity of two non-negative vectors, clamped to [0, 1].
/// ContractError on a zero or negative-valued input.
double progressive_factor(std::span<const double> probs, std::span<const double> mixed_label);

double alpha_for(const AlphaStrategy& strategy, std::span<const double> probs,
                 std::span<const double> mixed_label);

/// α·λ_attn + (1 − α)·λ_area, clamped to the interval spanned by the two.
double blend_lambda(double alpha, double lambda_attn, double lambda_area);

/// λ·y_i + (1 − λ)·y_j. ContractError unless 0 ≤ λ ≤ 1.
std::vector<double> mix_labels(std::span<const double> y_i, std::span<const double> y_j,
                               double lambda);

/// (1 − ε)·onehot(label) + ε/K.
std::vector<double> smooth_labels(std::size_t label, double epsilon, std::size_t num_classes);

}  // namespace mixpro::labeling
