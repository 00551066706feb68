// Copyright 2026 The MixPro Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "mixpro/tensor.hpp"

namespace mixpro::training {

using ad::Tensor;

/// 8-bit images stored planar (C, H, W) per sample, as in the CIFAR-10
/// binary layout.
struct Dataset {
  std::size_t channels = 3;
  std::size_t image_size = 32;
  std::size_t num_classes = 10;
  std::vector<std::uint8_t> pixels;
  std::vector<std::uint8_t> labels;

  std::size_t size() const { return labels.size(); }
  std::size_t image_bytes() const { return channels * image_size * image_size; }
  std::span<const std::uint8_t> image(std::size_t i) const {
    return {pixels.data() + i * image_bytes(), image_bytes()};
  }
  Dataset subset(std::span<const std::size_t> indices) const;
  bool operator==(const Dataset&) const = default;
};

/// Per-channel (x/255 − mean) / std.
struct Normalization {
  std::vector<double> mean{0.5, 0.5, 0.5};
  std::vector<double> std{0.25, 0.25, 0.25};
};

/// [B×C×H×W] normalized batch of the given samples.
Tensor make_batch(const Dataset& data, std::span<const std::size_t> indices,
                  const Normalization& norm);
/// Inverse of the normalization, clamped to [0, 255] and rounded.
std::vector<std::uint8_t> denormalize(const Tensor& image, const Normalization& norm);

/// CIFAR-10 binary records: 1 label byte + 3072 pixel bytes (R, G, B
/// planes, each row-major 32×32). FormatError on a partial record or a
/// label above 9, with the byte offset of the offending record.
Dataset load_cifar10(const std::filesystem::path& path);
Dataset parse_cifar10(std::span<const std::uint8_t> bytes);
void write_cifar10(const std::filesystem::path& path, const Dataset& data);

/// Procedural class-conditional images: an oriented grating whose angle and
/// frequency depend on the class, with random phase and contrast, a faint
/// class colour cast, random per-image brightness and pixel noise.
/// Samples are ordered class by class; deterministic in `seed`.
Dataset synth_dataset(std::uint64_t seed, std::size_t per_class, std::size_t num_classes,
                      std::size_t image_size);

struct Split {
  Dataset train;
  Dataset val;
};
/// Per class, a seeded shuffle sends ⌊n_c·val_fraction⌋ samples to val.
Split stratified_split(const Dataset& data, double val_fraction, std::uint64_t seed);

}  // namespace mixpro::training
