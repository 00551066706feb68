// Copyright 2026 The MixPro Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "mixpro/labeling.hpp"

#include <algorithm>
#include <cmath>

#include "mixpro/error.hpp"

namespace mixpro::labeling {

std::string to_string(AlphaKind kind) {
  switch (kind) {
    case AlphaKind::kPalCosine:
      return "pal_cosine";
    case AlphaKind::kEqual:
      return "equal";
    case AlphaKind::kLinear:
      return "linear";
    case AlphaKind::kParabolic:
      return "parabolic";
    case AlphaKind::kAreaOnly:
      return "area_only";
    case AlphaKind::kAttnOnly:
      return "attn_only";
  }
  return "unknown";
}

AlphaKind parse_alpha_kind(const std::string& name) {
  for (AlphaKind k : {AlphaKind::kPalCosine, AlphaKind::kEqual, AlphaKind::kLinear,
                      AlphaKind::kParabolic, AlphaKind::kAreaOnly, AlphaKind::kAttnOnly}) {
    if (to_string(k) == name) return k;
  }
  throw ConfigError("unknown alpha strategy '" + name + "'");
}

double lambda_attn(std::span<const double> attention, std::span<const double> down_mask) {
  if (attention.size() != down_mask.size()) {
    throw DimensionError("lambda_attn: attention has " + std::to_string(attention.size()) +
                         " entries, mask has " + std::to_string(down_mask.size()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < attention.size(); ++i) s += attention[i] * down_mask[i];
  return std::clamp(s, 0.0, 1.0);
}

double progressive_factor(std::span<const double> probs, std::span<const double> mixed_label) {
  if (probs.size() != mixed_label.size()) {
    throw DimensionError("progressive_factor: length mismatch");
  }
  double dot = 0.0, pp = 0.0, yy = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] < 0.0 || mixed_label[i] < 0.0) {
      throw ContractError("progressive_factor: inputs must be non-negative");
    }
    dot += probs[i] * mixed_label[i];
    pp += probs[i] * probs[i];
    yy += mixed_label[i] * mixed_label[i];
  }
  if (pp == 0.0 || yy == 0.0) throw ContractError("progressive_factor: zero vector");
  return std::clamp(dot / (std::sqrt(pp) * std::sqrt(yy)), 0.0, 1.0);
}

double alpha_for(const AlphaStrategy& strategy, std::span<const double> probs,
                 std::span<const double> mixed_label) {
  const double progress =
      strategy.total_epochs == 0
          ? 1.0
          : std::clamp(static_cast<double>(strategy.epoch) /
                           static_cast<double>(strategy.total_epochs),
                       0.0, 1.0);
  switch (strategy.kind) {
    case AlphaKind::kPalCosine:
      return progressive_factor(probs, mixed_label);
    case AlphaKind::kEqual:
      return 0.5;
    case AlphaKind::kLinear:
      return progress;
    case AlphaKind::kParabolic:
      return progress * progress;
    case AlphaKind::kAreaOnly:
      return 0.0;
    case AlphaKind::kAttnOnly:
      return 1.0;
  }
  return 0.0;
}

double blend_lambda(double alpha, double lambda_attn, double lambda_area) {
  const double v = alpha * lambda_attn + (1.0 - alpha) * lambda_area;
  return std::clamp(v, std::min(lambda_attn, lambda_area), std::max(lambda_attn, lambda_area));
}

std::vector<double> mix_labels(std::span<const double> y_i, std::span<const double> y_j,
                               double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw ContractError("mix_labels: lambda " + std::to_string(lambda) + " outside [0, 1]");
  }
  if (y_i.size() != y_j.size()) throw DimensionError("mix_labels: label length mismatch");
  std::vector<double> out(y_i.size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = lambda * y_i[k] + (1.0 - lambda) * y_j[k];
  return out;
}

std::vector<double> smooth_labels(std::size_t label, double epsilon, std::size_t num_classes) {
  if (label >= num_classes) {
    throw ContractError("smooth_labels: label " + std::to_string(label) + " >= K");
  }
  if (!(epsilon >= 0.0 && epsilon < 1.0)) {
    throw ParameterError("label smoothing must lie in [0, 1)");
  }
  const double off = epsilon / static_cast<double>(num_classes);
  std::vector<double> out(num_classes, off);
  out[label] = (1.0 - epsilon) + off;
  return out;
}

}  // namespace mixpro::labeling
