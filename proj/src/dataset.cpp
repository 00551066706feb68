// Copyright 2026 The MixPro Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "mixpro/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include "mixpro/error.hpp"
#include "mixpro/rng.hpp"

namespace mixpro::training {

namespace {

constexpr std::size_t kCifarSide = 32;
constexpr std::size_t kCifarChannels = 3;
constexpr std::size_t kCifarRecord = 1 + kCifarChannels * kCifarSide * kCifarSide;

// Synthetic generator. Orientation classes are π/K apart and each sample's
// angle is jittered by up to kAngleJitter, so neighbouring classes overlap.
constexpr double kAngleJitter = 0.2;
constexpr double kTint = 0.04;
constexpr double kBrightness = 0.06;
constexpr double kNoise = 0.12;

void check_norm(const Normalization& norm, std::size_t channels) {
  if (norm.mean.size() != channels || norm.std.size() != channels) {
    throw ConfigError("normalization needs " + std::to_string(channels) +
                      " mean and std values");
  }
  for (double s : norm.std) {
    if (!(s > 0.0)) throw ConfigError("normalization std must be positive");
  }
}

}  // namespace

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.channels = channels;
  out.image_size = image_size;
  out.num_classes = num_classes;
  out.pixels.reserve(indices.size() * image_bytes());
  out.labels.reserve(indices.size());
  for (std::size_t i : indices) {
    if (i >= size()) throw DimensionError("dataset index out of range");
    const auto img = image(i);
    out.pixels.insert(out.pixels.end(), img.begin(), img.end());
    out.labels.push_back(labels[i]);
  }
  return out;
}

Tensor make_batch(const Dataset& data, std::span<const std::size_t> indices,
                  const Normalization& norm) {
  check_norm(norm, data.channels);
  const std::size_t plane = data.image_size * data.image_size;
  Tensor batch({indices.size(), data.channels, data.image_size, data.image_size});
  auto out = batch.data();
  std::size_t at = 0;
  for (std::size_t i : indices) {
    const auto img = data.image(i);
    for (std::size_t c = 0; c < data.channels; ++c) {
      const double m = norm.mean[c], inv = 1.0 / norm.std[c];
      for (std::size_t p = 0; p < plane; ++p) {
        out[at++] = (img[c * plane + p] / 255.0 - m) * inv;
      }
    }
  }
  return batch;
}

std::vector<std::uint8_t> denormalize(const Tensor& image, const Normalization& norm) {
  const std::size_t channels = image.dim(0);
  check_norm(norm, channels);
  const std::size_t plane = image.size() / channels;
  std::vector<std::uint8_t> out(image.size());
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t p = 0; p < plane; ++p) {
      const double v = (image[c * plane + p] * norm.std[c] + norm.mean[c]) * 255.0;
      out[c * plane + p] = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
    }
  }
  return out;
}

Dataset parse_cifar10(std::span<const std::uint8_t> bytes) {
  Dataset data;
  const std::size_t records = bytes.size() / kCifarRecord;
  if (bytes.size() % kCifarRecord != 0) {
    throw FormatError("CIFAR-10 data ends with a partial record of " +
                          std::to_string(bytes.size() % kCifarRecord) + " bytes",
                      records * kCifarRecord);
  }
  data.pixels.reserve(records * (kCifarRecord - 1));
  data.labels.reserve(records);
  for (std::size_t r = 0; r < records; ++r) {
    const std::size_t offset = r * kCifarRecord;
    if (bytes[offset] > 9) {
      throw FormatError("CIFAR-10 label " + std::to_string(bytes[offset]) + " outside 0-9",
                        offset);
    }
    data.labels.push_back(bytes[offset]);
    data.pixels.insert(data.pixels.end(), bytes.begin() + static_cast<std::ptrdiff_t>(offset + 1),
                       bytes.begin() + static_cast<std::ptrdiff_t>(offset + kCifarRecord));
  }
  return data;
}

Dataset load_cifar10(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open CIFAR-10 file " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  try {
    return parse_cifar10(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what(), e.offset());
  }
}

void write_cifar10(const std::filesystem::path& path, const Dataset& data) {
  if (data.channels != kCifarChannels || data.image_size != kCifarSide) {
    throw DimensionError("CIFAR-10 layout requires 3×32×32 images");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  for (std::size_t i = 0; i < data.size(); ++i) {
    out.put(static_cast<char>(data.labels[i]));
    const auto img = data.image(i);
    out.write(reinterpret_cast<const char*>(img.data()), static_cast<std::streamsize>(img.size()));
  }
  if (!out) throw IoError("write failed for " + path.string());
}

Dataset synth_dataset(std::uint64_t seed, std::size_t per_class, std::size_t num_classes,
                      std::size_t image_size) {
  if (num_classes < 2) throw ParameterError("synthetic dataset needs at least 2 classes");
  if (num_classes > 256) throw ParameterError("labels are stored as bytes");
  Dataset data;
  data.channels = 3;
  data.image_size = image_size;
  data.num_classes = num_classes;
  data.pixels.reserve(per_class * num_classes * data.image_bytes());
  const double pi = std::numbers::pi;
  const double side = static_cast<double>(image_size);
  for (std::size_t c = 0; c < num_classes; ++c) {
    const double k = static_cast<double>(c);
    const double theta = pi * k / static_cast<double>(num_classes);
    double tint[3];
    for (int ch = 0; ch < 3; ++ch) {
      tint[ch] = kTint * std::cos(2.0 * pi * k / static_cast<double>(num_classes) + 2.0 * pi * ch / 3.0);
    }
    for (std::size_t n = 0; n < per_class; ++n) {
      Rng rng = make_stream(seed, {kTagSynth, c, n});
      std::normal_distribution<double> noise(0.0, kNoise);
      const double phase = 2.0 * pi * uniform01(rng);
      const double contrast = 0.1 + 0.15 * uniform01(rng);
      const double freq = (2.0 + 2.0 * uniform01(rng)) / side;  // cycles per pixel
      const double angle = theta + kAngleJitter * (2.0 * uniform01(rng) - 1.0);
      const double ct = std::cos(angle), st = std::sin(angle);
      double bright[3];
      for (double& b : bright) b = kBrightness * (2.0 * uniform01(rng) - 1.0);
      for (int ch = 0; ch < 3; ++ch) {
        for (std::size_t y = 0; y < image_size; ++y) {
          for (std::size_t x = 0; x < image_size; ++x) {
            const double u = static_cast<double>(x) * ct + static_cast<double>(y) * st;
            const double v = 0.5 + contrast * std::cos(2.0 * pi * freq * u + phase) + tint[ch] +
                             bright[ch] + noise(rng);
            data.pixels.push_back(
                static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
          }
        }
      }
      data.labels.push_back(static_cast<std::uint8_t>(c));
    }
  }
  return data;
}

Split stratified_split(const Dataset& data, double val_fraction, std::uint64_t seed) {
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) {
    throw ParameterError("validation fraction must lie in [0, 1)");
  }
  std::vector<std::vector<std::size_t>> by_class(data.num_classes);
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.labels[i] >= data.num_classes) throw ContractError("label exceeds class count");
    by_class[data.labels[i]].push_back(i);
  }
  std::vector<std::size_t> train_idx, val_idx;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& idx = by_class[c];
    Rng rng = make_stream(seed, {kTagShuffle, 0xC1A55, c});
    for (std::size_t i = idx.size(); i > 1; --i) {
      std::swap(idx[i - 1], idx[uniform_index(rng, i)]);
    }
    const auto n_val =
        static_cast<std::size_t>(std::floor(static_cast<double>(idx.size()) * val_fraction));
    val_idx.insert(val_idx.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
    train_idx.insert(train_idx.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end());
  }
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(val_idx.begin(), val_idx.end());
  return {data.subset(train_idx), data.subset(val_idx)};
}

}  // namespace mixpro::training
