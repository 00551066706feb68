// Copyright 2026 The MixPro Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "mixpro/robustness.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mixpro/error.hpp"
#include "mixpro/training.hpp"

namespace mixpro::robustness {

std::string to_string(DropMode mode) {
  switch (mode) {
    case DropMode::kRandom:
      return "random";
    case DropMode::kSalient:
      return "salient";
    case DropMode::kNonSalient:
      return "nonsalient";
  }
  return "unknown";
}

DropMode parse_drop_mode(const std::string& name) {
  if (name == "random") return DropMode::kRandom;
  if (name == "salient") return DropMode::kSalient;
  if (name == "nonsalient") return DropMode::kNonSalient;
  throw ConfigError("unknown occlusion mode '" + name + "' (expected random, salient or nonsalient)");
}

void OcclusionSpec::validate() const {
  for (std::size_t i = 0; i < ratios.size(); ++i) {
    if (!(ratios[i] >= 0.0 && ratios[i] <= 1.0)) {
      throw ParameterError("drop ratio " + std::to_string(ratios[i]) + " outside [0, 1]");
    }
    if (i > 0 && ratios[i] < ratios[i - 1]) throw ParameterError("drop ratios must ascend");
  }
}

std::vector<std::size_t> choose_patches(std::size_t num_patches, double ratio, DropMode mode,
                                        std::span<const double> saliency, Rng& rng) {
  if (!(ratio >= 0.0 && ratio <= 1.0)) throw ParameterError("drop ratio outside [0, 1]");
  const auto count = static_cast<std::size_t>(std::lround(static_cast<double>(num_patches) * ratio));
  std::vector<std::size_t> order(num_patches);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (mode == DropMode::kRandom) {
    for (std::size_t i = 0; i < count; ++i) {
      std::swap(order[i], order[i + uniform_index(rng, num_patches - i)]);
    }
  } else {
    if (saliency.size() != num_patches) {
      throw ContractError(to_string(mode) + " patch dropping needs a saliency value per patch");
    }
    if (mode == DropMode::kSalient) {
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) { return saliency[a] > saliency[b]; });
    } else {
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) { return saliency[a] < saliency[b]; });
    }
  }
  order.resize(count);
  return order;
}

Tensor drop_patches(const Tensor& image, std::size_t patch_size, double ratio, DropMode mode,
                    std::span<const double> saliency, Rng& rng) {
  if (image.rank() != 3 || image.dim(1) != image.dim(2) || patch_size == 0 ||
      image.dim(1) % patch_size != 0) {
    throw DimensionError("drop_patches expects a square [C×H×W] image divisible into patches");
  }
  const std::size_t side = image.dim(1), grid = side / patch_size;
  Tensor out = Tensor(image.shape(), std::vector<double>(image.data().begin(), image.data().end()));
  for (std::size_t t : choose_patches(grid * grid, ratio, mode, saliency, rng)) {
    const std::size_t y0 = (t / grid) * patch_size, x0 = (t % grid) * patch_size;
    for (std::size_t c = 0; c < image.dim(0); ++c) {
      for (std::size_t y = y0; y < y0 + patch_size; ++y) {
        for (std::size_t x = x0; x < x0 + patch_size; ++x) out[(c * side + y) * side + x] = 0.0;
      }
    }
  }
  return out;
}

std::vector<CurvePoint> occlusion_curve(const vit::ViTParams& params,
                                        const training::Dataset& data,
                                        const training::Normalization& norm,
                                        const OcclusionSpec& spec, std::size_t batch_size) {
  spec.validate();
  if (data.size() == 0) throw ContractError("cannot evaluate occlusion on an empty split");
  if (batch_size == 0) throw ParameterError("batch size must be positive");
  const vit::ViTConfig& cfg = params.config;
  const std::size_t n_tok = cfg.num_patches(), k = cfg.num_classes;
  const std::size_t per_image = cfg.channels * cfg.image_size * cfg.image_size;
  std::vector<std::size_t> correct(spec.ratios.size(), 0);
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    const std::size_t end = std::min(data.size(), start + batch_size);
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    const Tensor clean = training::make_batch(data, idx, norm);
    Tensor saliency;
    if (spec.mode != DropMode::kRandom) saliency = vit::predict(params, clean).attention;
    for (std::size_t r = 0; r < spec.ratios.size(); ++r) {
      Tensor occluded(clean.shape());
      for (std::size_t b = 0; b < idx.size(); ++b) {
        Tensor image({cfg.channels, cfg.image_size, cfg.image_size},
                     std::vector<double>(clean.data().begin() + static_cast<std::ptrdiff_t>(b * per_image),
                                         clean.data().begin() + static_cast<std::ptrdiff_t>((b + 1) * per_image)));
        Rng rng = make_stream(spec.seed, {kTagOcclusion, r, idx[b]});
        const std::span<const double> sal =
            spec.mode == DropMode::kRandom ? std::span<const double>{}
                                           : saliency.data().subspan(b * n_tok, n_tok);
        const Tensor dropped = drop_patches(image, cfg.patch_size, spec.ratios[r], spec.mode, sal, rng);
        std::copy(dropped.data().begin(), dropped.data().end(),
                  occluded.data().begin() + static_cast<std::ptrdiff_t>(b * per_image));
      }
      const vit::ForwardOutput out = vit::predict(params, occluded);
      for (std::size_t b = 0; b < idx.size(); ++b) {
        const auto row = out.logits.data().subspan(b * k, k);
        const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
        correct[r] += best == data.labels[idx[b]];
      }
    }
  }
  std::vector<CurvePoint> curve;
  for (std::size_t r = 0; r < spec.ratios.size(); ++r) {
    curve.push_back({spec.ratios[r], static_cast<double>(correct[r]) / static_cast<double>(data.size())});
  }
  return curve;
}

std::string curve_csv_header() {
  return "# saliency_source=model_class_attention zero_space=normalized rounding=nearest\n"
         "mode,ratio,top1\n";
}

std::string curve_csv_rows(DropMode mode, std::span<const CurvePoint> points) {
  std::string out;
  for (const CurvePoint& p : points) {
    out += to_string(mode) + "," + training::format_g9(p.ratio) + "," + training::format_g9(p.top1) + "\n";
  }
  return out;
}

}  // namespace mixpro::robustness
