// Copyright 2026 The MixPro Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mixpro/autodiff.hpp"

// Differentiable operators. Every op records a node on the graph of its
// inputs; mixing Vars from different graphs is a ContractError.
namespace mixpro::ad {

inline constexpr double kLayerNormEps = 1e-6;

/// Elementwise sum. `b` may have the same shape as `a` or a suffix of it
/// (bias and positional-embedding broadcast); its gradient is reduced over
/// the broadcast leading dimensions.
Var add(const Var& a, const Var& b);
/// Elementwise product of equal shapes.
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double factor);
Var square(const Var& a);
/// Sum of all elements, returned as a scalar.
Var sum(const Var& a);
Var mean(const Var& a);

/// a[m×k] · b[k×n]. dA = dC·Bᵀ, dB = Aᵀ·dC.
Var matmul(const Var& a, const Var& b);
/// x[..., k] · w[k×n] with the leading dimensions flattened into rows.
Var linear(const Var& x, const Var& w);
/// Batched product a[G×m×k] · b[G×k×n], or a[G×m×k] · b[G×n×k]ᵀ when
/// `transpose_b` is set.
Var bmm(const Var& a, const Var& b, bool transpose_b = false);

Var reshape(const Var& x, Shape shape);
/// Axis permutation; output axis i is input axis `axes[i]`.
Var permute(const Var& x, const std::vector<std::size_t>& axes);
Var slice(const Var& x, std::size_t axis, std::size_t start, std::size_t length);
Var concat(const std::vector<Var>& parts, std::size_t axis);
/// Stacks `count` copies of x along a new leading axis.
Var repeat_leading(const Var& x, std::size_t count);
/// Multiplies every slice x[b, ...] by factors[b]. The factors are constants.
Var scale_leading(const Var& x, std::span<const double> factors);

/// Numerically stable softmax along `axis`.
Var softmax(const Var& x, std::size_t axis);
/// Normalizes over the last axis, then applies gamma/beta (both shaped as
/// the last axis).
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = kLayerNormEps);
/// tanh approximation 0.5x(1 + tanh(√(2/π)(x + 0.044715x³))).
Var gelu(const Var& x);

/// Mean over rows of −Σ_k target·log softmax(logits). Every target row must
/// be non-negative and sum to 1 within 1e-6.
Var cross_entropy_soft(const Var& logits, const Tensor& targets);

// Plain (non-recording) helpers shared by the model and the label path.
Tensor softmax_rows(const Tensor& logits);
void gemm(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
          std::size_t n, bool transpose_a, bool transpose_b, bool accumulate);

}  // namespace mixpro::ad
