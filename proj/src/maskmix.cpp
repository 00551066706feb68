// Copyright 2026 The MixPro Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "mixpro/maskmix.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "mixpro/error.hpp"

namespace mixpro::maskmix {

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::kGrid:
      return "grid";
    case Strategy::kRegion:
      return "region";
    case Strategy::kRegionAligned:
      return "region_aligned";
    case Strategy::kBlock:
      return "block";
  }
  return "unknown";
}

Strategy parse_strategy(const std::string& name) {
  if (name == "grid") return Strategy::kGrid;
  if (name == "region") return Strategy::kRegion;
  if (name == "region_aligned") return Strategy::kRegionAligned;
  if (name == "block") return Strategy::kBlock;
  throw ConfigError("unknown mask strategy '" + name +
                    "' (expected grid, region, region_aligned or block)");
}

std::size_t MixMask::ones() const {
  return static_cast<std::size_t>(std::count(pixels.begin(), pixels.end(), std::uint8_t{1}));
}

namespace {

void recount(MixMask& m) {
  m.lambda_area = static_cast<double>(m.ones()) / static_cast<double>(m.width * m.height);
}

MixMask blank(std::size_t width, std::size_t height, Strategy s, double tau) {
  if (width == 0 || height == 0) throw ConfigError("mask dimensions must be positive");
  if (!(tau >= 0.0 && tau <= 1.0)) {
    throw ParameterError("tau must lie in [0, 1], got " + std::to_string(tau));
  }
  MixMask m;
  m.width = width;
  m.height = height;
  m.pixels.assign(width * height, 0);
  m.strategy = s;
  m.tau = tau;
  return m;
}

void fill_rect(MixMask& m, std::size_t y0, std::size_t y1, std::size_t x0, std::size_t x1) {
  for (std::size_t y = y0; y < y1; ++y) {
    std::fill(m.pixels.begin() + static_cast<std::ptrdiff_t>(y * m.width + x0),
              m.pixels.begin() + static_cast<std::ptrdiff_t>(y * m.width + x1), std::uint8_t{1});
  }
}

std::size_t floor_count(std::size_t total, double tau) {
  return std::min(total, static_cast<std::size_t>(std::floor(static_cast<double>(total) * tau)));
}

}  // namespace

MixMask MixMask::complement() const {
  MixMask c = *this;
  for (auto& p : c.pixels) p = static_cast<std::uint8_t>(1 - p);
  recount(c);
  return c;
}

double sample_tau(double beta, Rng& rng) {
  if (!(beta > 0.0)) throw ParameterError("Beta parameter must be positive");
  std::gamma_distribution<double> gamma(beta, 1.0);
  const double a = gamma(rng);
  const double b = gamma(rng);
  if (a + b == 0.0) return 0.5;  // both draws underflowed (tiny beta)
  return a / (a + b);
}

MixMask generate_grid_mask(std::size_t width, std::size_t height, std::size_t patch_size,
                           std::size_t scale_k, double tau, Rng& rng) {
  const std::size_t pm = scale_k * patch_size;
  if (pm == 0 || width % pm != 0 || height % pm != 0) {
    throw ConfigError("mask patch " + std::to_string(scale_k) + "x" + std::to_string(patch_size) +
                      " = " + std::to_string(pm) + " px does not divide a " +
                      std::to_string(width) + "x" + std::to_string(height) + " image");
  }
  MixMask m = blank(width, height, Strategy::kGrid, tau);
  const std::size_t gw = width / pm, gh = height / pm;
  m.mask_patch = pm;
  m.cells = gw * gh;
  const std::size_t count = floor_count(m.cells, tau);
  std::vector<std::size_t> order(m.cells);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(uniform_index(rng, m.cells - i));
    std::swap(order[i], order[j]);
    const std::size_t cy = order[i] / gw, cx = order[i] % gw;
    fill_rect(m, cy * pm, (cy + 1) * pm, cx * pm, (cx + 1) * pm);
  }
  recount(m);
  return m;
}

MixMask generate_region_mask(std::size_t width, std::size_t height, double tau, bool aligned,
                             std::size_t patch_size, Rng& rng) {
  MixMask m = blank(width, height, aligned ? Strategy::kRegionAligned : Strategy::kRegion, tau);
  const double side = std::sqrt(tau);
  const auto cut_w = std::min(width, static_cast<std::size_t>(static_cast<double>(width) * side));
  const auto cut_h = std::min(height, static_cast<std::size_t>(static_cast<double>(height) * side));
  std::size_t x0 = static_cast<std::size_t>(uniform_index(rng, width - cut_w + 1));
  std::size_t y0 = static_cast<std::size_t>(uniform_index(rng, height - cut_h + 1));
  std::size_t x1 = x0 + cut_w, y1 = y0 + cut_h;
  if (aligned) {
    if (patch_size == 0 || width % patch_size != 0 || height % patch_size != 0) {
      throw ConfigError("aligned region mask needs image sides divisible by the patch size");
    }
    auto snap = [patch_size](std::size_t v) {
      return (v + patch_size / 2) / patch_size * patch_size;
    };
    x0 = snap(x0);
    x1 = snap(x1);
    y0 = snap(y0);
    y1 = snap(y1);
  }
  if (x1 > x0 && y1 > y0) fill_rect(m, y0, y1, x0, x1);
  recount(m);
  return m;
}

MixMask generate_block_mask(std::size_t width, std::size_t height, std::size_t patch_size,
                            double tau, Rng& rng) {
  if (patch_size == 0 || width % patch_size != 0 || height % patch_size != 0) {
    throw ConfigError("block mask needs image sides divisible by the patch size");
  }
  MixMask m = blank(width, height, Strategy::kBlock, tau);
  const std::size_t gw = width / patch_size, gh = height / patch_size;
  const std::size_t n = gw * gh;
  const std::size_t target = floor_count(n, tau);
  const std::size_t bw = std::min<std::size_t>(2, gw), bh = std::min<std::size_t>(2, gh);
  std::vector<std::uint8_t> covered(n, 0);
  std::vector<std::size_t> added;  // cells in the order they were covered
  while (added.size() < target) {
    const std::size_t cx = static_cast<std::size_t>(uniform_index(rng, gw - bw + 1));
    const std::size_t cy = static_cast<std::size_t>(uniform_index(rng, gh - bh + 1));
    for (std::size_t dy = 0; dy < bh; ++dy) {
      for (std::size_t dx = 0; dx < bw; ++dx) {
        const std::size_t cell = (cy + dy) * gw + cx + dx;
        if (!covered[cell]) {
          covered[cell] = 1;
          added.push_back(cell);
        }
      }
    }
  }
  while (added.size() > target) {
    covered[added.back()] = 0;
    added.pop_back();
  }
  for (std::size_t cell : added) {
    const std::size_t cy = cell / gw, cx = cell % gw;
    fill_rect(m, cy * patch_size, (cy + 1) * patch_size, cx * patch_size, (cx + 1) * patch_size);
  }
  recount(m);
  return m;
}

Tensor mix_images(const Tensor& x_i, const Tensor& x_j, const MixMask& mask) {
  if (x_i.rank() != 3 || x_i.shape() != x_j.shape() || x_i.dim(1) != mask.height ||
      x_i.dim(2) != mask.width) {
    throw DimensionError("mix_images: images " + ad::shape_to_string(x_i.shape()) + " and " +
                         ad::shape_to_string(x_j.shape()) + " do not match a " +
                         std::to_string(mask.height) + "x" + std::to_string(mask.width) + " mask");
  }
  const std::size_t plane = mask.width * mask.height;
  Tensor out(x_i.shape());
  for (std::size_t c = 0; c < x_i.dim(0); ++c) {
    for (std::size_t p = 0; p < plane; ++p) {
      const std::size_t at = c * plane + p;
      out[at] = mask.pixels[p] ? x_i[at] : x_j[at];
    }
  }
  return out;
}

Tensor downsample_mask(const MixMask& mask, std::size_t patch_size) {
  if (patch_size == 0 || mask.width % patch_size != 0 || mask.height % patch_size != 0) {
    throw DimensionError("mask is not divisible into " + std::to_string(patch_size) +
                         "-pixel patches");
  }
  const std::size_t gw = mask.width / patch_size, gh = mask.height / patch_size;
  Tensor out({gw * gh});
  for (std::size_t gy = 0; gy < gh; ++gy) {
    for (std::size_t gx = 0; gx < gw; ++gx) {
      out[gy * gw + gx] = mask.at(gy * patch_size, gx * patch_size);
    }
  }
  return out;
}

}  // namespace mixpro::maskmix
