// Copyright 2026 The MixPro Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mixpro/config.hpp"
#include "mixpro/dataset.hpp"
#include "mixpro/labeling.hpp"
#include "mixpro/maskmix.hpp"
#include "mixpro/optim.hpp"
#include "mixpro/vit.hpp"

namespace mixpro::training {

/// AdamW state plus the weight-decay mask of one model.
struct Optimizer {
  ad::OptimizerState state;
  std::unique_ptr<bool[]> decay;
  std::size_t count = 0;

  Optimizer(const vit::ViTParams& params, const TrainConfig& cfg);
  void step(vit::ViTParams& params, double lr);
};

/// Test hooks for one training step.
struct StepOverrides {
  std::optional<double> tau;  // replaces the Beta draw
};

struct StepResult {
  double loss = 0.0;
  double tau = 0.0;
  std::vector<labeling::LambdaWeights> weights;  // per sample; empty for Mixup
  std::vector<std::vector<double>> targets;      // final soft labels per sample
};

/// Where a step sits in training, for epoch-driven α schedules.
struct Progress {
  std::size_t epoch = 1;  // 1-based
  std::size_t total_epochs = 1;
};

/// Sample partner of b under batch reversal.
inline std::size_t partner(std::size_t b, std::size_t batch) { return batch - 1 - b; }

/// Draws the mask configured in `cfg`.
maskmix::MixMask sample_mask(const TrainConfig& cfg, double tau, Rng& rng);

/// One MixPro step: τ → mask → mixed images (partner = reversed batch) →
/// forward → area-mixed label → α → λ_attn → λ → final label → CE →
/// backward → AdamW.
StepResult mixpro_train_step(vit::ViTParams& params, const Tensor& batch,
                             std::span<const std::uint8_t> labels, const TrainConfig& cfg,
                             Rng& rng, Optimizer& opt, double lr, Progress progress,
                             const StepOverrides& overrides = {});

/// Mixup: τ ~ Beta(mixup_alpha, mixup_alpha), linear blend of images and
/// smoothed labels with the reversed batch.
StepResult mixup_train_step(vit::ViTParams& params, const Tensor& batch,
                            std::span<const std::uint8_t> labels, const TrainConfig& cfg,
                            Rng& rng, Optimizer& opt, double lr,
                            const StepOverrides& overrides = {});

/// Stand-alone reference steps for the classic baselines. They draw random
/// numbers in the same order as mixpro_train_step.
///   kTransMix: CutMix box, λ = attention mass on the pasted box.
///   kMaskMix:  configured mask, λ = λ_area.
enum class Baseline { kTransMix, kMaskMix };
StepResult baseline_train_step(Baseline kind, vit::ViTParams& params, const Tensor& batch,
                               std::span<const std::uint8_t> labels, const TrainConfig& cfg,
                               Rng& rng, Optimizer& opt, double lr,
                               const StepOverrides& overrides = {});

/// Top-1 accuracy in eval mode. ContractError on an empty split.
double evaluate(const vit::ViTParams& params, const Dataset& split, const Normalization& norm,
                std::size_t batch_size = 250);

struct MetricsRecord {
  std::size_t epoch = 0;  // 1-based
  std::size_t step = 0;   // optimizer steps completed
  double lr = 0.0;        // last learning rate of the epoch
  double train_loss = 0.0;
  double alpha_mean = 0.0;  // NaN when no MixPro step ran this epoch
  double val_top1 = 0.0;
};

struct LoopOutputs {
  std::optional<std::filesystem::path> metrics_csv;
  std::optional<std::filesystem::path> lambdas_csv;
  std::optional<std::filesystem::path> checkpoint;
  std::function<void(const MetricsRecord&)> on_epoch;
};

struct LoopResult {
  std::vector<MetricsRecord> records;
  std::vector<double> step_losses;
  std::vector<bool> step_was_mixpro;
};

std::size_t steps_per_epoch(std::size_t train_size, std::size_t batch_size);

/// Trains `params` in place. Shuffling depends on (seed, epoch) and each
/// batch's draws on (seed, epoch, batch index) only.
LoopResult train_loop(const TrainConfig& cfg, const Dataset& train, const Dataset& val,
                      vit::ViTParams& params, const LoopOutputs& outputs = {});

/// "epoch,step,lr,train_loss,alpha_mean,val_top1" plus one row per record.
std::string metrics_csv(std::span<const MetricsRecord> records);

/// Builds the configured train/val split (synth or CIFAR-10 files).
Split load_data(const TrainConfig& cfg);

/// %.9g, with "nan" for NaN.
std::string format_g9(double v);

}  // namespace mixpro::training
