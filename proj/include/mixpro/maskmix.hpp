// Copyright 2026 The MixPro Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mixpro/rng.hpp"
#include "mixpro/tensor.hpp"

namespace mixpro::maskmix {

using ad::Tensor;

enum class Strategy {
  kGrid,           // MaskMix: patch-aligned grid, cells of k·P_image pixels
  kRegion,         // CutMix box
  kRegionAligned,  // CutMix box snapped to the image-patch grid
  kBlock,          // union of 2×2 patch-cell squares
};

std::string to_string(Strategy s);
/// Accepts "grid", "region", "region_aligned", "block"; ConfigError otherwise.
Strategy parse_strategy(const std::string& name);

/// Binary pixel mask M. A 1 takes the pixel from the first image x_i.
struct MixMask {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;  // row-major H×W, values 0/1
  Strategy strategy = Strategy::kGrid;
  std::size_t mask_patch = 0;  // P_mask for grid masks, 0 otherwise
  std::size_t cells = 0;       // S for grid masks, 0 otherwise
  double tau = 0.0;
  double lambda_area = 0.0;  // (number of 1-pixels) / (W·H)

  std::uint8_t at(std::size_t y, std::size_t x) const { return pixels[y * width + x]; }
  std::size_t ones() const;
  /// 1 − M, with lambda_area recomputed.
  MixMask complement() const;
};

/// τ ~ Beta(beta, beta).
double sample_tau(double beta, Rng& rng);

/// Marks exactly ⌊S·τ⌋ of the S = (W/P_mask)·(H/P_mask) cells, chosen
/// uniformly without replacement, where P_mask = scale_k·P_image.
MixMask generate_grid_mask(std::size_t width, std::size_t height, std::size_t patch_size,
                           std::size_t scale_k, double tau, Rng& rng);

/// One box with sides ⌊W·√τ⌋ × ⌊H·√τ⌋ placed uniformly inside the image.
/// When `aligned`, every edge is rounded to the nearest multiple of
/// `patch_size` and lambda_area is recounted.
MixMask generate_region_mask(std::size_t width, std::size_t height, double tau, bool aligned,
                             std::size_t patch_size, Rng& rng);

/// Adds random 2×2-cell squares until at least ⌊N·τ⌋ patch cells are
/// covered, then uncovers the most recently added cells until exactly
/// ⌊N·τ⌋ remain.
MixMask generate_block_mask(std::size_t width, std::size_t height, std::size_t patch_size,
                            double tau, Rng& rng);

/// x̃ = M ⊙ x_i + (1 − M) ⊙ x_j for [C×H×W] images, as a pixelwise select.
Tensor mix_images(const Tensor& x_i, const Tensor& x_j, const MixMask& mask);

/// Nearest-neighbour ↓(M): token t takes the mask value at the top-left
/// pixel of its patch cell. Returns a length-N vector in token order.
Tensor downsample_mask(const MixMask& mask, std::size_t patch_size);

}  // namespace mixpro::maskmix
