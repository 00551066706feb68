// Copyright 2026 The MixPro Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mixpro/dataset.hpp"
#include "mixpro/rng.hpp"
#include "mixpro/vit.hpp"

// Occlusion by patch dropping: a fraction of image patches is set to 0 in
// normalized pixel space and top-1 accuracy is re-measured.
namespace mixpro::robustness {

using ad::Tensor;

enum class DropMode { kRandom, kSalient, kNonSalient };

std::string to_string(DropMode mode);
/// "random", "salient", "nonsalient"; ConfigError otherwise.
DropMode parse_drop_mode(const std::string& name);

struct OcclusionSpec {
  DropMode mode = DropMode::kRandom;
  std::vector<double> ratios{0.0, 0.25, 0.5, 0.75, 1.0};
  std::uint64_t seed = 0;
  /// ParameterError unless every ratio is in [0, 1] and the list ascends.
  void validate() const;
};

/// Token indices to zero: round(N·ratio) of them. Random mode draws without
/// replacement; salient takes the highest saliency first, nonsalient the
/// lowest, ties going to the lower token index.
std::vector<std::size_t> choose_patches(std::size_t num_patches, double ratio, DropMode mode,
                                        std::span<const double> saliency, Rng& rng);

/// Zeroes the chosen patches of a [C×H×W] image. ContractError when a
/// non-random mode gets no saliency.
Tensor drop_patches(const Tensor& image, std::size_t patch_size, double ratio, DropMode mode,
                    std::span<const double> saliency, Rng& rng);

struct CurvePoint {
  double ratio = 0.0;
  double top1 = 0.0;
};

/// Saliency is the model's own class-attention map of each clean image.
/// Image i at ratio index r draws from stream (seed, r, i).
std::vector<CurvePoint> occlusion_curve(const vit::ViTParams& params,
                                        const training::Dataset& data,
                                        const training::Normalization& norm,
                                        const OcclusionSpec& spec, std::size_t batch_size = 250);

/// Metadata comment line, then "mode,ratio,top1" rows.
std::string curve_csv_header();
std::string curve_csv_rows(DropMode mode, std::span<const CurvePoint> points);

}  // namespace mixpro::robustness
