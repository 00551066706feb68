// Copyright 2026 The MixPro Lab Authors
// SPDX-License-Identifier: Apache-2.0

// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// exits non-zero if any fails. Takes about seven minutes on one core.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "mixpro/ablation.hpp"
#include "mixpro/gradcheck.hpp"
#include "mixpro/labeling.hpp"
#include "mixpro/maskmix.hpp"
#include "mixpro/robustness.hpp"
#include "mixpro/training.hpp"
#include "support/finite_difference.hpp"

#ifndef MIXPRO_SOURCE_DIR
#define MIXPRO_SOURCE_DIR "."
#endif

namespace fs = std::filesystem;
using namespace mixpro;
using ad::Tensor;
using testing::random_tensor;

namespace {

// Pinned tolerances and budgets.
constexpr double kGradTolerance = 1e-4;
constexpr int kGradSeeds = 100;
constexpr double kGradBudgetSeconds = 120.0;
constexpr int kMaskConfigs = 1000;
constexpr double kLambdaTolerance = 1e-12;
constexpr int kReductionSteps = 50;
constexpr double kTrainBudgetSeconds = 600.0;
constexpr double kMinTop1 = 0.30;
constexpr double kStepOneRelTolerance = 0.10;
constexpr double kMinAlphaRise = 0.05;
constexpr double kSigmas = 3.0;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---- 1 ----

Outcome gradient_suite() {
  gradcheck::SuiteOptions opt;
  opt.seed = 0;
  opt.seeds = kGradSeeds;
  const std::clock_t c0 = std::clock();
  const gradcheck::SuiteReport report = gradcheck::run_suite(opt);
  const double cpu = static_cast<double>(std::clock() - c0) / CLOCKS_PER_SEC;
  const auto& worst = report.worst();
  const bool model_seen = std::any_of(report.checks.begin(), report.checks.end(),
                                      [](const auto& c) { return c.name.rfind("vit:", 0) == 0; });
  const vit::ViTConfig toy = gradcheck::toy_config();
  Outcome o;
  o.pass = report.passed(kGradTolerance) && model_seen && toy.depth == 2 && toy.embed_dim == 16 &&
           cpu < kGradBudgetSeconds;
  o.detail = std::to_string(report.checks.size()) + " checks, " + std::to_string(kGradSeeds) +
             " seeds, max rel err " + fmt("%.2e", worst.max_rel_error) + " (" + worst.name +
             "), cpu " + fmt("%.1f", cpu) + "s";
  return o;
}

// ---- 2 ----

Outcome maskmix_invariants() {
  Rng rng = make_stream(20260, {2});
  const std::size_t patch_sizes[] = {2, 4, 8};
  const std::size_t scales[] = {1, 2, 4};
  int bad_align = 0, bad_mean = 0, bad_count = 0, bad_complement = 0;
  for (int n = 0; n < kMaskConfigs; ++n) {
    const std::size_t p = patch_sizes[uniform_index(rng, 3)];
    const std::size_t k = scales[uniform_index(rng, 3)];
    const std::size_t side = p * k * (1 + uniform_index(rng, 4));
    const std::size_t channels = 1 + uniform_index(rng, 3);
    const double tau = uniform01(rng);
    const maskmix::MixMask m = maskmix::generate_grid_mask(side, side, p, k, tau, rng);
    const Tensor xi = random_tensor({channels, side, side}, rng, 1.0, 2.0);
    const Tensor xj = random_tensor({channels, side, side}, rng, -2.0, -1.0);
    const Tensor mixed = maskmix::mix_images(xi, xj, m);

    const std::size_t grid = side / p, cells_side = side / (p * k);
    for (std::size_t t = 0; t < grid * grid; ++t) {
      bool from_i = true, from_j = true;
      for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t y = 0; y < p; ++y) {
          for (std::size_t x = 0; x < p; ++x) {
            const std::size_t at = (c * side + (t / grid) * p + y) * side + (t % grid) * p + x;
            from_i = from_i && mixed[at] == xi[at];
            from_j = from_j && mixed[at] == xj[at];
          }
        }
      }
      bad_align += !(from_i || from_j);
    }

    const std::size_t s = cells_side * cells_side;
    const double expected = std::floor(static_cast<double>(s) * tau) / static_cast<double>(s);
    bad_count += m.cells != s || m.lambda_area != expected;
    const Tensor down = maskmix::downsample_mask(m, p);
    double ones = 0.0;
    bool binary = true;
    for (double v : down.data()) {
      binary = binary && (v == 0.0 || v == 1.0);
      ones += v;
    }
    bad_mean += !binary || ones / static_cast<double>(down.size()) != m.lambda_area;

    const maskmix::MixMask mc = m.complement();
    const Tensor swapped = maskmix::mix_images(xj, xi, mc);
    const Tensor down_c = maskmix::downsample_mask(mc, p);
    bool sym = swapped.same_values(mixed) && mc.ones() + m.ones() == side * side;
    for (std::size_t t = 0; t < down.size(); ++t) sym = sym && down_c[t] == 1.0 - down[t];
    bad_complement += !sym;
  }
  Outcome o;
  o.pass = bad_align == 0 && bad_mean == 0 && bad_count == 0 && bad_complement == 0;
  o.detail = std::to_string(kMaskConfigs) + " configs; violations: alignment " +
             std::to_string(bad_align) + ", downsample mean " + std::to_string(bad_mean) +
             ", floor(S*tau)/S " + std::to_string(bad_count) + ", complement " +
             std::to_string(bad_complement);
  return o;
}

// ---- 3 ----

Outcome lambda_identities() {
  Rng rng = make_stream(20260, {3});
  int bad_end = 0, bad_bound = 0, bad_uniform = 0;
  for (int n = 0; n < 10000; ++n) {
    const double attn = uniform01(rng), area = uniform01(rng), a = uniform01(rng);
    bad_end += labeling::blend_lambda(0.0, attn, area) != area;
    bad_end += labeling::blend_lambda(1.0, attn, area) != attn;
    const double l = labeling::blend_lambda(a, attn, area);
    bad_bound += l < std::min(attn, area) || l > std::max(attn, area);
  }
  for (int n = 0; n < 1000; ++n) {
    const std::size_t p = 4, side = p * (1 + uniform_index(rng, 4));
    const maskmix::MixMask m = maskmix::generate_grid_mask(side, side, p, 1, uniform01(rng), rng);
    const Tensor down = maskmix::downsample_mask(m, p);
    const std::vector<double> uniform(down.size(), 1.0 / static_cast<double>(down.size()));
    bad_uniform += std::abs(labeling::lambda_attn(uniform, down.data()) - m.lambda_area) >
                   kLambdaTolerance;
  }
  const std::vector<double> y = labeling::smooth_labels(3, 0.1, 10);
  const std::vector<double> e0 = labeling::smooth_labels(0, 0.0, 10);
  const std::vector<double> e1 = labeling::smooth_labels(1, 0.0, 10);
  const std::vector<double> flat(10, 0.1);
  const double same = labeling::progressive_factor(y, y);
  const double orth = labeling::progressive_factor(e0, e1);
  const double unif = labeling::progressive_factor(flat, e0);
  const bool closed = std::abs(same - 1.0) <= kLambdaTolerance &&
                      std::abs(orth) <= kLambdaTolerance &&
                      std::abs(unif - 1.0 / std::sqrt(10.0)) <= kLambdaTolerance;
  Outcome o;
  o.pass = bad_end == 0 && bad_bound == 0 && bad_uniform == 0 && closed;
  o.detail = "endpoint violations " + std::to_string(bad_end) + ", bound " +
             std::to_string(bad_bound) + ", uniform-attention " + std::to_string(bad_uniform) +
             "; cos(y,y)=" + fmt("%.15g", same) + " cos(orth)=" + fmt("%.3g", orth) +
             " cos(uniform,onehot)=" + fmt("%.15g", unif);
  return o;
}

// ---- 4 ----

Outcome strategy_reductions(const training::TrainConfig& desk, const training::Split& data) {
  training::TrainConfig cfg = desk;
  cfg.batch_size = 16;
  int lambda_mismatch = 0, label_mismatch = 0, loss_mismatch = 0;
  auto run = [&](labeling::AlphaKind alpha, maskmix::Strategy mask, training::Baseline base) {
    training::TrainConfig c = cfg;
    c.alpha_strategy = alpha;
    c.mask_strategy = mask;
    vit::ViTParams a = vit::init_params(c.model, 41), b = a;
    training::Optimizer oa(a, c), ob(b, c);
    for (int s = 0; s < kReductionSteps; ++s) {
      std::vector<std::size_t> idx(c.batch_size);
      for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = (s * 16 + i * 37) % data.train.size();
      const Tensor batch = training::make_batch(data.train, idx, c.norm);
      std::vector<std::uint8_t> labels;
      for (std::size_t i : idx) labels.push_back(data.train.labels[i]);
      Rng ra = make_stream(c.seed, {99, static_cast<std::uint64_t>(s)}), rb = ra;
      const training::Progress prog{1 + static_cast<std::size_t>(s) % c.epochs, c.epochs};
      const auto x = training::mixpro_train_step(a, batch, labels, c, ra, oa, 1e-3, prog);
      const auto y = training::baseline_train_step(base, b, batch, labels, c, rb, ob, 1e-3);
      for (std::size_t i = 0; i < labels.size(); ++i) {
        lambda_mismatch += x.weights[i].lambda != y.weights[i].lambda;
        label_mismatch += x.targets[i] != y.targets[i];
      }
      loss_mismatch += x.loss != y.loss;
    }
  };
  run(labeling::AlphaKind::kAttnOnly, maskmix::Strategy::kRegion, training::Baseline::kTransMix);
  run(labeling::AlphaKind::kAreaOnly, maskmix::Strategy::kGrid, training::Baseline::kMaskMix);
  Outcome o;
  o.pass = lambda_mismatch == 0 && label_mismatch == 0 && loss_mismatch == 0;
  o.detail = std::to_string(kReductionSteps) +
             " steps each for attn_only+region vs TransMix and area_only+grid vs MaskMix; "
             "non-identical lambda " + std::to_string(lambda_mismatch) + ", labels " +
             std::to_string(label_mismatch) + ", losses " + std::to_string(loss_mismatch);
  return o;
}

// ---- 5, 6 ----

struct ToyRun {
  training::LoopResult loop;
  vit::ViTParams params;
  double seconds = 0.0;
};

Outcome toy_training(const ToyRun& run) {
  const double top1 = run.loop.records.back().val_top1;
  const double step1 = run.loop.step_losses.front();
  // With a uniform prediction, cross-entropy against any label that sums to
  // one is ln K, so smoothing adds nothing at step 1.
  const double reference = std::log(10.0);
  const double rel = std::abs(step1 - reference) / reference;
  Outcome o;
  o.pass = run.seconds < kTrainBudgetSeconds && top1 >= kMinTop1 && rel <= kStepOneRelTolerance;
  o.detail = std::to_string(run.loop.records.size()) + " epochs in " + fmt("%.0f", run.seconds) +
             "s, val top-1 " + fmt("%.4f", top1) + ", step-1 loss " + fmt("%.4f", step1) +
             " (ln 10 = " + fmt("%.4f", reference) + ", rel dev " + fmt("%.3f", rel) + ")";
  return o;
}

Outcome alpha_trend(const ToyRun& run) {
  const double first = run.loop.records.front().alpha_mean;
  const double last = run.loop.records.back().alpha_mean;
  Outcome o;
  o.pass = std::isfinite(first) && std::isfinite(last) && last - first >= kMinAlphaRise;
  o.detail = "mean alpha epoch 1 " + fmt("%.4f", first) + ", final epoch " + fmt("%.4f", last) +
             ", rise " + fmt("%.4f", last - first);
  return o;
}

// ---- 7 ----

Outcome determinism(const training::TrainConfig& desk, const fs::path& dir) {
  training::TrainConfig cfg = desk;
  cfg.epochs = 3;
  cfg.warmup_epochs = 1;
  cfg.synth_per_class = 100;
  cfg.log_lambdas = true;
  const training::Split data = training::load_data(cfg);
  std::string metrics[2], lambdas[2];
  for (int r = 0; r < 2; ++r) {
    vit::ViTParams p = vit::init_params(cfg.model, cfg.seed);
    training::LoopOutputs out;
    out.metrics_csv = dir / ("det" + std::to_string(r) + "_metrics.csv");
    out.lambdas_csv = dir / ("det" + std::to_string(r) + "_lambdas.csv");
    training::train_loop(cfg, data.train, data.val, p, out);
    metrics[r] = read_file(*out.metrics_csv);
    lambdas[r] = read_file(*out.lambdas_csv);
  }
  Outcome o;
  o.pass = !metrics[0].empty() && metrics[0] == metrics[1] && lambdas[0] == lambdas[1];
  o.detail = "desk model, " + std::to_string(cfg.epochs) + " epochs x2: metrics CSV " +
             std::to_string(metrics[0].size()) + " bytes " +
             (metrics[0] == metrics[1] ? "identical" : "DIFFERENT") + ", lambdas CSV " +
             std::to_string(lambdas[0].size()) + " bytes " +
             (lambdas[0] == lambdas[1] ? "identical" : "DIFFERENT");
  return o;
}

// ---- 8 ----

Outcome occlusion(const ToyRun& run, const training::TrainConfig& cfg, const training::Dataset& val) {
  const double clean = training::evaluate(run.params, val, cfg.norm, cfg.eval_batch_size);
  const vit::ViTConfig& m = run.params.config;
  const auto out = vit::predict(run.params, Tensor({1, m.channels, m.image_size, m.image_size}));
  const auto row = out.logits.data();
  const auto cls = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
  const double n = static_cast<double>(val.size());
  const double rate = static_cast<double>(std::count(val.labels.begin(), val.labels.end(), cls)) / n;
  const double sigma = std::sqrt(std::max(rate * (1.0 - rate), 1.0 / n) / n);

  bool zero_ok = true, one_ok = true, repro = true;
  std::string detail;
  for (auto mode : {robustness::DropMode::kRandom, robustness::DropMode::kSalient,
                    robustness::DropMode::kNonSalient}) {
    const robustness::OcclusionSpec spec{mode, {0.0, 0.25, 0.5, 0.75, 1.0}, cfg.seed};
    const auto a = robustness::occlusion_curve(run.params, val, cfg.norm, spec, cfg.eval_batch_size);
    const auto b = robustness::occlusion_curve(run.params, val, cfg.norm, spec, cfg.eval_batch_size);
    zero_ok = zero_ok && a.front().top1 == clean;
    one_ok = one_ok && std::abs(a.back().top1 - rate) <= kSigmas * sigma;
    for (std::size_t i = 0; i < a.size(); ++i) repro = repro && a[i].top1 == b[i].top1;
    detail += " " + robustness::to_string(mode) + "[";
    for (std::size_t i = 0; i < a.size(); ++i) detail += (i ? " " : "") + fmt("%.3f", a[i].top1);
    detail += "]";
  }
  Outcome o;
  o.pass = zero_ok && one_ok && repro;
  o.detail = "clean " + fmt("%.4f", clean) + ", constant-input rate " + fmt("%.4f", rate) +
             " (3 sigma " + fmt("%.4f", kSigmas * sigma) + "), reproducible " +
             (repro ? "yes" : "no") + ";" + detail;
  return o;
}

// ---- 9 ----

Outcome ablation_rows(const fs::path& dir) {
  training::TrainConfig cfg;
  cfg.model.image_size = 16;
  cfg.model.patch_size = 4;
  cfg.model.embed_dim = 16;
  cfg.model.heads = 2;
  cfg.model.depth = 1;
  cfg.model.num_classes = 4;
  cfg.model.drop_path_rate = 0.0;
  cfg.epochs = 6;
  cfg.warmup_epochs = 1;
  cfg.batch_size = 16;
  cfg.base_lr = 3e-3;
  cfg.synth_per_class = 100;
  const training::Split data = training::load_data(cfg);

  const std::vector<std::pair<std::string, std::vector<std::string>>> expected{
      {"components",
       {"CutMix", "CutMix+TransMix", "TransMix+MaskMix", "CutMix+TransMix+PAL", "MaskMix+PAL"}},
      {"mask_strategy", {"region", "block", "random", "random_4x"}},
      {"scale", {"1x", "2x", "4x"}},
      {"beta", {"0.5", "0.8", "1", "2"}},
      {"alpha_strategy", {"equal", "linear", "parabolic", "pal_cosine"}},
  };
  bool ok = true;
  std::string detail;
  for (const auto& [table, rows] : expected) {
    const auto results = training::run_ablation(cfg, table, data, dir / "ablation");
    const fs::path csv = dir / ("ablation_" + table + ".csv");
    std::ofstream(csv) << training::ablation_csv(results);
    std::istringstream in(read_file(csv));
    std::string line;
    std::getline(in, line);
    std::vector<std::string> got;
    detail += " " + table + "{";
    while (std::getline(in, line)) {
      std::vector<std::string> cols;
      std::stringstream ls(line);
      for (std::string f; std::getline(ls, f, ',');) cols.push_back(f);
      ok = ok && cols.size() == 9 && cols[0] == table;
      if (cols.size() >= 7) {
        got.push_back(cols[1]);
        detail += (got.size() > 1 ? " " : "") + cols[1] + "=" + cols[6];
      }
    }
    detail += "}";
    ok = ok && got == rows;
  }
  Outcome o;
  o.pass = ok;
  o.detail = "row sets exact; toy val top-1 (reported only):" + detail;
  return o;
}

}  // namespace

int main() {
  const fs::path dir = fs::temp_directory_path() / ("mixpro_acceptance_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  int failures = 0;
  auto report = [&](int n, const char* name, const Outcome& o) {
    std::printf("%s criterion %d (%s): %s\n", o.pass ? "PASS" : "FAIL", n, name, o.detail.c_str());
    std::fflush(stdout);
    failures += !o.pass;
  };
  auto guarded = [&](int n, const char* name, const std::function<Outcome()>& f) {
    try {
      report(n, name, f());
    } catch (const std::exception& e) {
      report(n, name, {false, std::string("exception: ") + e.what()});
    }
  };

  const training::TrainConfig desk =
      training::load_config(fs::path(MIXPRO_SOURCE_DIR) / "configs" / "desk.conf");
  const training::Split data = training::load_data(desk);

  guarded(1, "gradient suite", gradient_suite);
  guarded(2, "MaskMix invariants", maskmix_invariants);
  guarded(3, "lambda identities", lambda_identities);
  guarded(4, "strategy reductions", [&] { return strategy_reductions(desk, data); });

  ToyRun toy;
  bool trained = false;
  try {
    toy.params = vit::init_params(desk.model, desk.seed);
    training::LoopOutputs out;
    out.metrics_csv = dir / "toy_metrics.csv";
    const auto t0 = std::chrono::steady_clock::now();
    toy.loop = training::train_loop(desk, data.train, data.val, toy.params, out);
    toy.seconds = seconds_since(t0);
    trained = true;
  } catch (const std::exception& e) {
    std::printf("toy training threw: %s\n", e.what());
  }
  if (trained) {
    guarded(5, "toy training", [&] { return toy_training(toy); });
    guarded(6, "alpha trend", [&] { return alpha_trend(toy); });
  } else {
    report(5, "toy training", {false, "training did not complete"});
    report(6, "alpha trend", {false, "training did not complete"});
  }
  guarded(7, "determinism", [&] { return determinism(desk, dir); });
  if (trained) {
    guarded(8, "occlusion protocol", [&] { return occlusion(toy, desk, data.val); });
  } else {
    report(8, "occlusion protocol", {false, "training did not complete"});
  }
  guarded(9, "ablation harness", [&] { return ablation_rows(dir); });

  std::error_code ec;
  fs::remove_all(dir, ec);
  std::printf("%d of 9 criteria passed\n", 9 - failures);
  return failures == 0 ? 0 : 1;
}
