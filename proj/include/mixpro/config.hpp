// Copyright 2026 The MixPro Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "mixpro/dataset.hpp"
#include "mixpro/labeling.hpp"
#include "mixpro/maskmix.hpp"
#include "mixpro/vit.hpp"

namespace mixpro::training {

struct TrainConfig {
  vit::ViTConfig model;

  // Augmentation.
  double beta = 1.0;  // τ ~ Beta(β, β) for mask sampling
  maskmix::Strategy mask_strategy = maskmix::Strategy::kGrid;
  std::size_t scale_k = 1;  // P_mask = scale_k · patch_size
  labeling::AlphaKind alpha_strategy = labeling::AlphaKind::kPalCosine;
  double mixup_alpha = 0.8;
  double mixpro_switch_prob = 0.5;  // per batch: MixPro step, else Mixup
  double label_smoothing = 0.1;

  // Optimization.
  std::size_t epochs = 30;
  std::size_t batch_size = 64;
  double base_lr = 1e-3;
  double min_lr = 1e-5;
  double weight_decay = 0.05;
  std::size_t warmup_epochs = 2;
  std::uint64_t seed = 0;

  // Data.
  std::string dataset = "synth";  // "synth" or "cifar10"
  std::string data_dir;           // cifar10: data_batch_*.bin and test_batch.bin
  std::size_t synth_per_class = 500;
  double val_fraction = 0.2;  // synth only
  Normalization norm;
  std::size_t eval_batch_size = 250;

  // Outputs.
  std::string output_dir = "runs/desk";
  bool log_lambdas = false;

  /// ConfigError naming the offending key.
  void validate() const;
};

/// Every key with its current value, in a fixed order. Feeding the pairs
/// back through apply_setting reproduces the config.
std::vector<std::pair<std::string, std::string>> config_entries(const TrainConfig& cfg);
/// ConfigError on an unknown key or a malformed value.
void apply_setting(TrainConfig& cfg, const std::string& key, const std::string& value);

/// `key = value` lines; `#` starts a comment. Errors carry the line number.
TrainConfig parse_config(const std::string& text, const std::string& source = "<config>");
/// ConfigError when the file cannot be read (the message names the path).
TrainConfig load_config(const std::filesystem::path& path);
std::string format_config(const TrainConfig& cfg);

}  // namespace mixpro::training
