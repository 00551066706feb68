// Copyright 2026 The MixPro Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace mixpro {

using Rng = std::mt19937_64;

/// Independent stream keyed by a global seed and a tuple of tags such as
/// (epoch, batch_index, purpose). Equal keys give equal streams.
Rng make_stream(std::uint64_t seed, std::initializer_list<std::uint64_t> tags = {});

/// Uniform double in [0, 1) built from the top 53 bits of one draw.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Uniform integer in [0, n). Rejection sampling keeps it unbiased.
std::uint64_t uniform_index(Rng& rng, std::uint64_t n);

// Stream purposes, used as the last tag of make_stream().
enum StreamTag : std::uint64_t {
  kTagInit = 1,
  kTagShuffle = 2,
  kTagBatch = 3,
  kTagSynth = 4,
  kTagOcclusion = 5,
  kTagVisualize = 6,
  kTagGradcheck = 7,
};

}  // namespace mixpro
