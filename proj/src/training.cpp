// Copyright 2026 The MixPro Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "mixpro/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>

#include "mixpro/error.hpp"
#include "mixpro/ops.hpp"

namespace mixpro::training {

using labeling::LambdaWeights;

Optimizer::Optimizer(const vit::ViTParams& params, const TrainConfig& cfg) {
  state.hyper.lr = cfg.base_lr;
  state.hyper.weight_decay = cfg.weight_decay;
  const std::vector<bool> mask = params.decay_mask();
  count = mask.size();
  decay = std::make_unique<bool[]>(count);
  std::copy(mask.begin(), mask.end(), decay.get());
}

void Optimizer::step(vit::ViTParams& params, double lr) {
  state.hyper.lr = lr;
  const auto tensors = params.tensors();
  ad::adamw_step(tensors, state, std::span<const bool>(decay.get(), count));
}

namespace {

void check_batch(const Tensor& batch, std::span<const std::uint8_t> labels,
                 const TrainConfig& cfg) {
  if (batch.rank() != 4 || batch.dim(0) != labels.size()) {
    throw DimensionError("batch " + ad::shape_to_string(batch.shape()) + " does not match " +
                         std::to_string(labels.size()) + " labels");
  }
  if (batch.dim(0) < 2) throw ConfigError("mixing needs a batch of at least 2 samples");
  for (std::uint8_t y : labels) {
    if (y >= cfg.model.num_classes) throw ContractError("label exceeds num_classes");
  }
}

void ensure_trainable(vit::ViTParams& params) {
  for (ad::Tensor* t : params.tensors()) {
    if (!t->requires_grad()) t->set_requires_grad(true);
  }
  params.zero_grad();
}

/// Pixelwise select of every sample with its reversed partner.
Tensor mix_with_partner(const Tensor& batch, const maskmix::MixMask& mask) {
  const std::size_t b_count = batch.dim(0), channels = batch.dim(1);
  const std::size_t plane = batch.dim(2) * batch.dim(3);
  if (mask.height != batch.dim(2) || mask.width != batch.dim(3)) {
    throw DimensionError("mask does not match the batch images");
  }
  Tensor out(batch.shape());
  const std::size_t per_image = channels * plane;
  for (std::size_t b = 0; b < b_count; ++b) {
    const double* xi = batch.data().data() + b * per_image;
    const double* xj = batch.data().data() + partner(b, b_count) * per_image;
    double* o = out.data().data() + b * per_image;
    for (std::size_t c = 0; c < channels; ++c) {
      for (std::size_t p = 0; p < plane; ++p) {
        o[c * plane + p] = mask.pixels[p] ? xi[c * plane + p] : xj[c * plane + p];
      }
    }
  }
  return out;
}

Tensor stack_targets(const std::vector<std::vector<double>>& rows) {
  const std::size_t k = rows.front().size();
  Tensor t({rows.size(), k});
  for (std::size_t b = 0; b < rows.size(); ++b) {
    std::copy(rows[b].begin(), rows[b].end(), t.data().begin() + static_cast<std::ptrdiff_t>(b * k));
  }
  return t;
}

/// Cross-entropy on the recorded logits, backward, optimizer step.
double finish_step(ad::Graph& graph, const ad::Var& logits, const Tensor& targets,
                   vit::ViTParams& params, Optimizer& opt, double lr) {
  ad::Var loss = ad::cross_entropy_soft(logits, targets);
  graph.backward(loss);
  opt.step(params, lr);
  return loss.value().item();
}

std::vector<double> smoothed(std::uint8_t label, const TrainConfig& cfg) {
  return labeling::smooth_labels(label, cfg.label_smoothing, cfg.model.num_classes);
}

}  // namespace

maskmix::MixMask sample_mask(const TrainConfig& cfg, double tau, Rng& rng) {
  const std::size_t side = cfg.model.image_size, patch = cfg.model.patch_size;
  switch (cfg.mask_strategy) {
    case maskmix::Strategy::kGrid:
      return maskmix::generate_grid_mask(side, side, patch, cfg.scale_k, tau, rng);
    case maskmix::Strategy::kRegion:
      return maskmix::generate_region_mask(side, side, tau, false, patch, rng);
    case maskmix::Strategy::kRegionAligned:
      return maskmix::generate_region_mask(side, side, tau, true, patch, rng);
    case maskmix::Strategy::kBlock:
      return maskmix::generate_block_mask(side, side, patch, tau, rng);
  }
  throw ConfigError("unknown mask strategy");
}

StepResult mixpro_train_step(vit::ViTParams& params, const Tensor& batch,
                             std::span<const std::uint8_t> labels, const TrainConfig& cfg,
                             Rng& rng, Optimizer& opt, double lr, Progress progress,
                             const StepOverrides& overrides) {
  check_batch(batch, labels, cfg);
  const std::size_t n = batch.dim(0);
  StepResult result;
  result.tau = overrides.tau ? *overrides.tau : maskmix::sample_tau(cfg.beta, rng);
  const maskmix::MixMask mask = sample_mask(cfg, result.tau, rng);
  const Tensor mixed = mix_with_partner(batch, mask);

  ensure_trainable(params);
  ad::Graph graph;
  const vit::TrainingForward fwd = vit::forward(graph, params, mixed, vit::Mode::kTrain, rng);
  const Tensor& probs = fwd.output.probs;
  const Tensor& attention = fwd.output.attention;
  const std::size_t k = cfg.model.num_classes, tokens = cfg.model.num_patches();
  const Tensor down = maskmix::downsample_mask(mask, cfg.model.patch_size);
  const labeling::AlphaStrategy strategy{cfg.alpha_strategy, progress.epoch,
                                         progress.total_epochs};

  for (std::size_t b = 0; b < n; ++b) {
    const auto y_i = smoothed(labels[b], cfg);
    const auto y_j = smoothed(labels[partner(b, n)], cfg);
    LambdaWeights w;
    w.lambda_area = mask.lambda_area;
    const auto y_area = labeling::mix_labels(y_i, y_j, w.lambda_area);
    w.alpha = labeling::alpha_for(strategy, probs.data().subspan(b * k, k), y_area);
    w.lambda_attn = labeling::lambda_attn(attention.data().subspan(b * tokens, tokens), down.data());
    w.lambda = labeling::blend_lambda(w.alpha, w.lambda_attn, w.lambda_area);
    result.targets.push_back(labeling::mix_labels(y_i, y_j, w.lambda));
    result.weights.push_back(w);
  }
  result.loss = finish_step(graph, fwd.logits, stack_targets(result.targets), params, opt, lr);
  return result;
}

StepResult mixup_train_step(vit::ViTParams& params, const Tensor& batch,
                            std::span<const std::uint8_t> labels, const TrainConfig& cfg,
                            Rng& rng, Optimizer& opt, double lr, const StepOverrides& overrides) {
  check_batch(batch, labels, cfg);
  const std::size_t n = batch.dim(0);
  StepResult result;
  const double tau =
      overrides.tau ? *overrides.tau : maskmix::sample_tau(cfg.mixup_alpha, rng);
  result.tau = tau;
  Tensor mixed(batch.shape());
  const std::size_t per_image = batch.size() / n;
  for (std::size_t b = 0; b < n; ++b) {
    const std::size_t r = partner(b, n);
    for (std::size_t p = 0; p < per_image; ++p) {
      mixed[b * per_image + p] = tau * batch[b * per_image + p] + (1.0 - tau) * batch[r * per_image + p];
    }
    result.targets.push_back(
        labeling::mix_labels(smoothed(labels[b], cfg), smoothed(labels[r], cfg), tau));
  }
  ensure_trainable(params);
  ad::Graph graph;
  const vit::TrainingForward fwd = vit::forward(graph, params, mixed, vit::Mode::kTrain, rng);
  result.loss = finish_step(graph, fwd.logits, stack_targets(result.targets), params, opt, lr);
  return result;
}

StepResult baseline_train_step(Baseline kind, vit::ViTParams& params, const Tensor& batch,
                               std::span<const std::uint8_t> labels, const TrainConfig& cfg,
                               Rng& rng, Optimizer& opt, double lr,
                               const StepOverrides& overrides) {
  check_batch(batch, labels, cfg);
  const std::size_t n = batch.dim(0), side = cfg.model.image_size, patch = cfg.model.patch_size;
  StepResult result;
  result.tau = overrides.tau ? *overrides.tau : maskmix::sample_tau(cfg.beta, rng);
  const maskmix::MixMask mask =
      kind == Baseline::kTransMix
          ? maskmix::generate_region_mask(side, side, result.tau, false, patch, rng)
          : sample_mask(cfg, result.tau, rng);
  const Tensor mixed = mix_with_partner(batch, mask);

  ensure_trainable(params);
  ad::Graph graph;
  const vit::TrainingForward fwd = vit::forward(graph, params, mixed, vit::Mode::kTrain, rng);
  const Tensor& attention = fwd.output.attention;
  const std::size_t grid = side / patch, tokens = grid * grid, k = cfg.model.num_classes;

  for (std::size_t b = 0; b < n; ++b) {
    double lam = mask.lambda_area;
    double attn_mass = 0.0;
    if (kind == Baseline::kTransMix) {
      // Attention mass on tokens whose top-left pixel lies in the box.
      for (std::size_t t = 0; t < tokens; ++t) {
        const double inside = mask.at((t / grid) * patch, (t % grid) * patch);
        attn_mass += attention[b * tokens + t] * inside;
      }
      lam = std::clamp(attn_mass, 0.0, 1.0);
    }
    const std::uint8_t a = labels[b], c = labels[partner(b, n)];
    const double off = cfg.label_smoothing / static_cast<double>(k);
    std::vector<double> target(k);
    for (std::size_t j = 0; j < k; ++j) {
      const double yi = (j == a ? 1.0 - cfg.label_smoothing : 0.0) + off;
      const double yj = (j == c ? 1.0 - cfg.label_smoothing : 0.0) + off;
      target[j] = lam * yi + (1.0 - lam) * yj;
    }
    result.targets.push_back(std::move(target));
    LambdaWeights w;
    w.lambda_area = mask.lambda_area;
    w.lambda_attn = kind == Baseline::kTransMix ? lam : 0.0;
    w.alpha = kind == Baseline::kTransMix ? 1.0 : 0.0;
    w.lambda = lam;
    result.weights.push_back(w);
  }
  result.loss = finish_step(graph, fwd.logits, stack_targets(result.targets), params, opt, lr);
  return result;
}

double evaluate(const vit::ViTParams& params, const Dataset& split, const Normalization& norm,
                std::size_t batch_size) {
  if (split.size() == 0) throw ContractError("cannot evaluate on an empty split");
  if (batch_size == 0) throw ParameterError("evaluation batch size must be positive");
  const std::size_t k = params.config.num_classes;
  std::size_t correct = 0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < split.size(); start += batch_size) {
    const std::size_t end = std::min(split.size(), start + batch_size);
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    const vit::ForwardOutput out = vit::predict(params, make_batch(split, idx, norm));
    for (std::size_t b = 0; b < idx.size(); ++b) {
      const auto row = out.logits.data().subspan(b * k, k);
      const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
      correct += best == split.labels[idx[b]];
    }
  }
  return static_cast<double>(correct) / static_cast<double>(split.size());
}

std::size_t steps_per_epoch(std::size_t train_size, std::size_t batch_size) {
  return batch_size == 0 ? 0 : train_size / batch_size;
}

std::string format_g9(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

namespace {

std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace

std::string metrics_csv(std::span<const MetricsRecord> records) {
  std::string out = "epoch,step,lr,train_loss,alpha_mean,val_top1\n";
  for (const MetricsRecord& r : records) {
    out += std::to_string(r.epoch) + "," + std::to_string(r.step) + "," + format_g9(r.lr) + "," +
           format_g9(r.train_loss) + "," + format_g9(r.alpha_mean) + "," + format_g9(r.val_top1) +
           "\n";
  }
  return out;
}

LoopResult train_loop(const TrainConfig& cfg, const Dataset& train, const Dataset& val,
                      vit::ViTParams& params, const LoopOutputs& outputs) {
  cfg.validate();
  if (!(params.config == cfg.model)) {
    throw ConfigError("model parameters do not match the configured architecture");
  }
  if (train.channels != cfg.model.channels || train.image_size != cfg.model.image_size ||
      train.num_classes != cfg.model.num_classes) {
    throw ConfigError("dataset geometry does not match the model configuration");
  }
  const std::size_t spe = steps_per_epoch(train.size(), cfg.batch_size);
  if (spe == 0) {
    throw ConfigError("training split of " + std::to_string(train.size()) +
                      " samples is smaller than batch_size " + std::to_string(cfg.batch_size));
  }
  const std::uint64_t total = static_cast<std::uint64_t>(cfg.epochs * spe);
  const std::uint64_t warmup = static_cast<std::uint64_t>(cfg.warmup_epochs * spe);

  std::ofstream lambdas;
  if (outputs.lambdas_csv) {
    if (outputs.lambdas_csv->has_parent_path()) {
      std::filesystem::create_directories(outputs.lambdas_csv->parent_path());
    }
    lambdas.open(*outputs.lambdas_csv, std::ios::binary);
    if (!lambdas) throw IoError("cannot write " + outputs.lambdas_csv->string());
    lambdas << "epoch,step,sample,lambda_area,lambda_attn,alpha,lambda\n";
  }

  Optimizer opt(params, cfg);
  LoopResult result;
  std::vector<std::size_t> order(train.size());
  std::vector<std::uint8_t> labels(cfg.batch_size);
  std::uint64_t step = 0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle = make_stream(cfg.seed, {kTagShuffle, epoch});
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[uniform_index(shuffle, i)]);
    }
    double loss_sum = 0.0, alpha_sum = 0.0, lr = 0.0;
    std::size_t alpha_count = 0;
    for (std::size_t s = 0; s < spe; ++s) {
      const std::span<const std::size_t> idx(order.data() + s * cfg.batch_size, cfg.batch_size);
      for (std::size_t b = 0; b < idx.size(); ++b) labels[b] = train.labels[idx[b]];
      const Tensor batch = make_batch(train, idx, cfg.norm);
      Rng rng = make_stream(cfg.seed, {kTagBatch, epoch, s});
      lr = ad::lr_at_step(step + 1, warmup, total, cfg.base_lr, cfg.min_lr);
      const bool use_mixpro = uniform01(rng) < cfg.mixpro_switch_prob;
      const StepResult r =
          use_mixpro
              ? mixpro_train_step(params, batch, labels, cfg, rng, opt, lr, {epoch, cfg.epochs})
              : mixup_train_step(params, batch, labels, cfg, rng, opt, lr);
      ++step;
      loss_sum += r.loss;
      result.step_losses.push_back(r.loss);
      result.step_was_mixpro.push_back(use_mixpro);
      for (std::size_t b = 0; b < r.weights.size(); ++b) {
        const LambdaWeights& w = r.weights[b];
        alpha_sum += w.alpha;
        ++alpha_count;
        if (lambdas.is_open()) {
          lambdas << epoch << ',' << step << ',' << b << ',' << format_g17(w.lambda_area) << ','
                  << format_g17(w.lambda_attn) << ',' << format_g17(w.alpha) << ','
                  << format_g17(w.lambda) << '\n';
        }
      }
    }
    MetricsRecord rec;
    rec.epoch = epoch;
    rec.step = static_cast<std::size_t>(step);
    rec.lr = lr;
    rec.train_loss = loss_sum / static_cast<double>(spe);
    rec.alpha_mean = alpha_count ? alpha_sum / static_cast<double>(alpha_count)
                                 : std::numeric_limits<double>::quiet_NaN();
    rec.val_top1 = evaluate(params, val, cfg.norm, cfg.eval_batch_size);
    result.records.push_back(rec);
    if (outputs.on_epoch) outputs.on_epoch(rec);
  }
  if (lambdas.is_open()) {
    lambdas.flush();
    if (!lambdas) throw IoError("write failed for " + outputs.lambdas_csv->string());
  }
  if (outputs.metrics_csv) write_text(*outputs.metrics_csv, metrics_csv(result.records));
  if (outputs.checkpoint) {
    if (outputs.checkpoint->has_parent_path()) {
      std::filesystem::create_directories(outputs.checkpoint->parent_path());
    }
    vit::save_checkpoint(*outputs.checkpoint, params);
  }
  return result;
}

Split load_data(const TrainConfig& cfg) {
  cfg.validate();
  if (cfg.dataset == "synth") {
    const Dataset all = synth_dataset(cfg.seed, cfg.synth_per_class, cfg.model.num_classes,
                                      cfg.model.image_size);
    return stratified_split(all, cfg.val_fraction, cfg.seed);
  }
  if (cfg.model.image_size != 32 || cfg.model.channels != 3 || cfg.model.num_classes != 10) {
    throw ConfigError("dataset cifar10 requires image_size 32, channels 3 and num_classes 10");
  }
  const std::filesystem::path dir(cfg.data_dir);
  Split split;
  for (int i = 1; i <= 5; ++i) {
    const auto file = dir / ("data_batch_" + std::to_string(i) + ".bin");
    if (!std::filesystem::exists(file)) continue;
    const Dataset part = load_cifar10(file);
    split.train.pixels.insert(split.train.pixels.end(), part.pixels.begin(), part.pixels.end());
    split.train.labels.insert(split.train.labels.end(), part.labels.begin(), part.labels.end());
  }
  if (split.train.size() == 0) {
    throw IoError("no data_batch_*.bin files found in " + dir.string());
  }
  split.val = load_cifar10(dir / "test_batch.bin");
  return split;
}

}  // namespace mixpro::training
