// Copyright 2026 The MixPro Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mixpro/autodiff.hpp"
#include "mixpro/rng.hpp"
#include "mixpro/tensor.hpp"

namespace mixpro::vit {

using ad::Tensor;

struct ViTConfig {
  std::size_t image_size = 32;  // W == H, pixels
  std::size_t channels = 3;
  std::size_t patch_size = 8;  // P_image, pixels
  std::size_t embed_dim = 64;
  std::size_t heads = 4;
  std::size_t depth = 4;
  double mlp_ratio = 4.0;
  std::size_t num_classes = 10;
  double drop_path_rate = 0.1;

  std::size_t grid() const { return image_size / patch_size; }
  /// Patch tokens N, excluding the class token.
  std::size_t num_patches() const { return grid() * grid(); }
  std::size_t tokens() const { return num_patches() + 1; }
  std::size_t patch_dim() const { return channels * patch_size * patch_size; }
  std::size_t head_dim() const { return embed_dim / heads; }
  std::size_t mlp_hidden() const;

  /// Throws ConfigError on impossible geometry.
  void validate() const;

  bool operator==(const ViTConfig&) const = default;
};

struct BlockParams {
  Tensor ln1_gamma, ln1_beta;
  Tensor q_weight, q_bias;
  Tensor k_weight, k_bias;
  Tensor v_weight, v_bias;
  Tensor proj_weight, proj_bias;
  Tensor ln2_gamma, ln2_beta;
  Tensor fc1_weight, fc1_bias;
  Tensor fc2_weight, fc2_bias;
};

/// All learnable tensors of the model. tensors() lists them in declaration
/// order, which is also the checkpoint order.
struct ViTParams {
  ViTConfig config;
  Tensor patch_weight, patch_bias;
  Tensor cls_token;
  Tensor pos_embed;
  std::vector<BlockParams> blocks;
  Tensor norm_gamma, norm_beta;
  Tensor head_weight, head_bias;

  std::vector<Tensor*> tensors();
  std::vector<const Tensor*> tensors() const;
  std::vector<std::string> names() const;
  /// True for weight matrices, false for biases, norms, and embeddings.
  std::vector<bool> decay_mask() const;
  std::size_t parameter_count() const;

  void set_requires_grad(bool on);
  void zero_grad();
};

/// Truncated-normal (σ = 0.02, cut at ±2σ) weights and embeddings, zero
/// biases, unit layer-norm gains. Deterministic in `seed`.
ViTParams init_params(const ViTConfig& config, std::uint64_t seed);

/// [C×H×W] image → [N × C·P²] tokens. Tokens run over the patch grid in
/// row-major order; each token holds channel-major (c, y, x) pixels.
Tensor patchify(const Tensor& image, std::size_t patch_size);
Tensor unpatchify(const Tensor& tokens, std::size_t channels, std::size_t image_size,
                  std::size_t patch_size);

enum class Mode { kEval, kTrain };

/// Detached forward results.
struct ForwardOutput {
  Tensor logits;     // [B×K]
  Tensor probs;      // [B×K], softmax of logits
  Tensor attention;  // [B×N], class-token attention of the last block
};

/// Forward pass recorded on `graph` so a loss on `logits` can be
/// backpropagated into the parameters that require grad.
struct TrainingForward {
  ad::Var logits;
  ForwardOutput output;
};

/// `batch` is [B×C×H×W]. In kTrain mode residual branches are dropped per
/// sample with probability drop_path_rate using draws from `rng`.
///
/// The attention map is the class-token row of the last block's attention,
/// averaged over heads, without the class-to-class entry, renormalized to
/// sum to 1 over the N patch tokens.
TrainingForward forward(ad::Graph& graph, ViTParams& params, const Tensor& batch, Mode mode,
                        Rng& rng);
ForwardOutput forward(const ViTParams& params, const Tensor& batch, Mode mode, Rng& rng);
/// Eval-mode convenience overload.
ForwardOutput predict(const ViTParams& params, const Tensor& batch);

// Checkpoints: "MIXPROVT" magic, u32 version, config block, u64 value
// count, then every parameter in declaration order. All little-endian.
std::vector<std::uint8_t> serialize(const ViTParams& params);
ViTParams deserialize(const std::vector<std::uint8_t>& bytes);
void save_checkpoint(const std::filesystem::path& path, const ViTParams& params);
ViTParams load_checkpoint(const std::filesystem::path& path);

}  // namespace mixpro::vit
