// Copyright 2026 The MixPro Lab Authors
// SPDX-License-Identifier: Apache-2.0

// mixpro: train, evaluate, ablate, occlusion-test, gradient-check and
// visualize. Exit codes: 0 ok, 1 check failed, 2 usage or config, 3 I/O.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "mixpro/ablation.hpp"
#include "mixpro/error.hpp"
#include "mixpro/gradcheck.hpp"
#include "mixpro/robustness.hpp"
#include "mixpro/training.hpp"

#ifndef MIXPRO_VERSION
#define MIXPRO_VERSION "dev"
#endif

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace mixpro;
using mixpro::ad::Tensor;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;

constexpr double kGradTolerance = 1e-4;

struct ConfigArgs {
  std::string config_path;
  std::string manifest_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;

  void add_to(CLI::App* cmd) {
    cmd->add_option("-c,--config", config_path, "Config file (key = value lines)");
    cmd->add_option("--manifest", manifest_path, "Take the config from a run manifest");
    cmd->add_option("--set", overrides, "Override a config key: --set key=value")
        ->allow_extra_args(false);
    cmd->add_option("--seed", seed, "Override the seed");
  }

  training::TrainConfig resolve() const {
    training::TrainConfig cfg;
    if (!config_path.empty() && !manifest_path.empty()) {
      throw ConfigError("pass either --config or --manifest, not both");
    }
    if (!config_path.empty()) cfg = training::load_config(config_path);
    if (!manifest_path.empty()) {
      std::ifstream in(manifest_path);
      if (!in) throw ConfigError("cannot read manifest '" + manifest_path + "'");
      json m;
      try {
        m = json::parse(in);
      } catch (const json::exception& e) {
        throw ConfigError("manifest '" + manifest_path + "' is not valid JSON: " + e.what());
      }
      if (!m.contains("config") || !m["config"].is_object()) {
        throw ConfigError("manifest '" + manifest_path + "' has no config object");
      }
      for (const auto& [k, v] : m["config"].items()) {
        training::apply_setting(cfg, k, v.get<std::string>());
      }
    }
    for (const std::string& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
      training::apply_setting(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (seed) cfg.seed = *seed;
    cfg.validate();
    return cfg;
  }
};

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

json config_json(const training::TrainConfig& cfg) {
  json c = json::object();
  for (const auto& [k, v] : training::config_entries(cfg)) c[k] = v;
  return c;
}

vit::ViTParams load_matching_checkpoint(const std::string& path, const training::TrainConfig& cfg) {
  vit::ViTParams params = vit::load_checkpoint(path);
  if (!(params.config == cfg.model)) {
    throw ConfigError("checkpoint '" + path + "' architecture does not match the config");
  }
  return params;
}

std::vector<double> parse_ratios(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("bad drop ratio '" + item + "'");
    }
  }
  if (out.empty()) throw ConfigError("no drop ratios given");
  return out;
}

// ---- train ----

int cmd_train(const ConfigArgs& args, const std::string& out_override, bool quiet) {
  training::TrainConfig cfg = args.resolve();
  if (!out_override.empty()) cfg.output_dir = out_override;
  const fs::path out(cfg.output_dir);
  fs::create_directories(out);

  training::LoopOutputs outputs;
  outputs.metrics_csv = out / "metrics.csv";
  outputs.checkpoint = out / "checkpoint.bin";
  if (cfg.log_lambdas) outputs.lambdas_csv = out / "lambdas.csv";
  if (!quiet) {
    outputs.on_epoch = [](const training::MetricsRecord& r) {
      std::fprintf(stderr, "epoch %zu  step %zu  lr %.3g  loss %.4f  alpha %.4f  val_top1 %.4f\n",
                   r.epoch, r.step, r.lr, r.train_loss, r.alpha_mean, r.val_top1);
    };
  }

  json manifest;
  manifest["command"] = "train";
  manifest["version"] = MIXPRO_VERSION;
  manifest["seed"] = cfg.seed;
  manifest["config"] = config_json(cfg);
  manifest["started_at"] = utc_now();
  manifest["finished_at"] = nullptr;
  json files = {{"manifest", (out / "manifest.json").string()},
                {"metrics", outputs.metrics_csv->string()},
                {"checkpoint", outputs.checkpoint->string()}};
  if (outputs.lambdas_csv) files["lambdas"] = outputs.lambdas_csv->string();
  manifest["outputs"] = files;
  write_file(out / "manifest.json", manifest.dump(2) + "\n");

  const training::Split data = training::load_data(cfg);
  vit::ViTParams params = vit::init_params(cfg.model, cfg.seed);
  const training::LoopResult result = training::train_loop(cfg, data.train, data.val, params, outputs);

  manifest["finished_at"] = utc_now();
  manifest["final_val_top1"] = result.records.back().val_top1;
  write_file(out / "manifest.json", manifest.dump(2) + "\n");
  std::printf("val_top1 %s\n", training::format_g9(result.records.back().val_top1).c_str());
  return kExitOk;
}

// ---- eval ----

int cmd_eval(const ConfigArgs& args, const std::string& checkpoint, const std::string& split) {
  const training::TrainConfig cfg = args.resolve();
  const vit::ViTParams params = load_matching_checkpoint(checkpoint, cfg);
  const training::Split data = training::load_data(cfg);
  const training::Dataset& d = split == "train" ? data.train : data.val;
  const double top1 = training::evaluate(params, d, cfg.norm, cfg.eval_batch_size);
  std::printf("top1 %s\n", training::format_g9(top1).c_str());
  return kExitOk;
}

// ---- ablate ----

int cmd_ablate(const ConfigArgs& args, const std::string& table, const std::string& out_override) {
  training::ablation_rows(table);  // reject unknown names before any work
  training::TrainConfig cfg = args.resolve();
  if (!out_override.empty()) cfg.output_dir = out_override;
  const fs::path out(cfg.output_dir);
  const training::Split data = training::load_data(cfg);
  const auto results = training::run_ablation(
      cfg, table, data, out, [](const training::AblationResult& r) {
        std::fprintf(stderr, "%s/%s  val_top1 %.4f\n", r.table.c_str(), r.row.c_str(), r.val_top1);
      });
  const fs::path csv = out / ("ablation_" + table + ".csv");
  write_file(csv, training::ablation_csv(results));
  std::printf("%s\n", csv.string().c_str());
  return kExitOk;
}

// ---- occlusion ----

int cmd_occlusion(const ConfigArgs& args, const std::string& checkpoint, const std::string& modes,
                  const std::string& ratios, const std::string& out_path) {
  const training::TrainConfig cfg = args.resolve();
  const vit::ViTParams params = load_matching_checkpoint(checkpoint, cfg);
  std::vector<robustness::DropMode> mode_list;
  std::stringstream ss(modes);
  std::string m;
  while (std::getline(ss, m, ',')) mode_list.push_back(robustness::parse_drop_mode(m));
  if (mode_list.empty()) throw ConfigError("no occlusion modes given");
  const training::Split data = training::load_data(cfg);

  std::string csv = robustness::curve_csv_header();
  for (robustness::DropMode mode : mode_list) {
    robustness::OcclusionSpec spec{mode, parse_ratios(ratios), cfg.seed};
    try {
      spec.validate();
    } catch (const ParameterError& e) {
      throw ConfigError(e.what());
    }
    const auto curve = robustness::occlusion_curve(params, data.val, cfg.norm, spec, cfg.eval_batch_size);
    csv += robustness::curve_csv_rows(mode, curve);
  }
  if (out_path.empty()) {
    std::fputs(csv.c_str(), stdout);
  } else {
    write_file(out_path, csv);
  }
  return kExitOk;
}

// ---- visualize ----

void write_ppm(const fs::path& path, const std::vector<std::uint8_t>& planar, std::size_t side) {
  std::string bytes = "P6\n" + std::to_string(side) + " " + std::to_string(side) + "\n255\n";
  const std::size_t plane = side * side;
  for (std::size_t p = 0; p < plane; ++p) {
    for (std::size_t c = 0; c < 3; ++c) bytes.push_back(static_cast<char>(planar[c * plane + p]));
  }
  write_file(path, bytes);
}

void write_attention_pgm(const fs::path& path, std::span<const double> attention, std::size_t grid,
                         std::size_t patch) {
  const auto [lo, hi] = std::minmax_element(attention.begin(), attention.end());
  const double range = *hi - *lo;
  const std::size_t side = grid * patch;
  std::string bytes = "P5\n" + std::to_string(side) + " " + std::to_string(side) + "\n255\n";
  for (std::size_t y = 0; y < side; ++y) {
    for (std::size_t x = 0; x < side; ++x) {
      const double a = attention[(y / patch) * grid + x / patch];
      const double v = range > 0.0 ? (a - *lo) / range * 255.0 : 0.0;
      bytes.push_back(static_cast<char>(static_cast<std::uint8_t>(std::lround(v))));
    }
  }
  write_file(path, bytes);
}

int cmd_visualize(const ConfigArgs& args, const std::string& checkpoint, std::size_t n,
                  const std::string& outdir) {
  const training::TrainConfig cfg = args.resolve();
  if (cfg.model.channels != 3) throw ConfigError("visualize writes RGB images; channels must be 3");
  const vit::ViTParams params = load_matching_checkpoint(checkpoint, cfg);
  const training::Split data = training::load_data(cfg);
  if (data.val.size() < 2) throw ConfigError("visualize needs at least two validation images");
  const fs::path out(outdir);
  const std::size_t side = cfg.model.image_size, per_image = 3 * side * side;
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng = make_stream(cfg.seed, {kTagVisualize, i});
    const std::size_t a = uniform_index(rng, data.val.size());
    std::size_t b = uniform_index(rng, data.val.size() - 1);
    if (b >= a) ++b;
    const std::vector<std::size_t> idx{a, b};
    const Tensor pair = training::make_batch(data.val, idx, cfg.norm);
    const double tau = maskmix::sample_tau(cfg.beta, rng);
    const maskmix::MixMask mask = training::sample_mask(cfg, tau, rng);
    Tensor x_i({3, side, side}), x_j({3, side, side});
    std::copy(pair.data().begin(), pair.data().begin() + static_cast<std::ptrdiff_t>(per_image), x_i.data().begin());
    std::copy(pair.data().begin() + static_cast<std::ptrdiff_t>(per_image), pair.data().end(), x_j.data().begin());
    const Tensor mixed = maskmix::mix_images(x_i, x_j, mask);
    const vit::ForwardOutput fwd = vit::predict(params, mixed.reshaped({1, 3, side, side}));
    const std::string stem = "pair" + std::to_string(i);
    write_ppm(out / (stem + "_a.ppm"), training::denormalize(x_i, cfg.norm), side);
    write_ppm(out / (stem + "_b.ppm"), training::denormalize(x_j, cfg.norm), side);
    write_ppm(out / (stem + "_mixed.ppm"), training::denormalize(mixed, cfg.norm), side);
    write_attention_pgm(out / (stem + "_attention.pgm"), fwd.attention.data(), cfg.model.grid(),
                        cfg.model.patch_size);
  }
  std::printf("wrote %zu files to %s\n", 4 * n, out.string().c_str());
  return kExitOk;
}

// ---- gradcheck ----

int cmd_gradcheck(std::uint64_t seed, int seeds, const std::string& corrupt) {
  gradcheck::SuiteOptions opt;
  opt.seed = seed;
  opt.seeds = seeds;
  opt.corrupt_op = corrupt;
  const auto start = std::chrono::steady_clock::now();
  const gradcheck::SuiteReport report = gradcheck::run_suite(opt);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  for (const auto& c : report.checks) {
    std::printf("%-40s max_rel_err %.3e  (%zu comparisons)\n", c.name.c_str(), c.max_rel_error,
                c.comparisons);
  }
  const auto& worst = report.worst();
  std::printf("max relative error %.3e (%s) over %d seeds in %.1fs\n", worst.max_rel_error,
              worst.name.c_str(), seeds, secs);
  if (!report.passed(kGradTolerance)) {
    std::printf("FAILED: worst op %s exceeds %.0e\n", worst.name.c_str(), kGradTolerance);
    return kExitCheckFailed;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MixPro data augmentation on a small vision transformer"};
  app.set_version_flag("--version", MIXPRO_VERSION);
  app.require_subcommand(1);

  ConfigArgs cfg_args;
  std::string out_dir, checkpoint, split = "val", table, modes = "random,salient,nonsalient";
  std::string ratios = "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1", out_file, corrupt;
  std::size_t n_pairs = 4;
  std::uint64_t gc_seed = 0;
  int gc_seeds = 100;
  bool quiet = false;

  auto* train = app.add_subcommand("train", "Train a model and write metrics, checkpoint and manifest");
  cfg_args.add_to(train);
  train->add_option("-o,--out", out_dir, "Output directory (overrides output_dir)");
  train->add_flag("-q,--quiet", quiet, "No per-epoch progress on stderr");

  auto* eval = app.add_subcommand("eval", "Top-1 accuracy of a checkpoint");
  cfg_args.add_to(eval);
  eval->add_option("--checkpoint", checkpoint)->required();
  eval->add_option("--split", split)->check(CLI::IsMember({"train", "val"}));

  auto* ablate = app.add_subcommand("ablate", "Run one ablation table");
  cfg_args.add_to(ablate);
  ablate->add_option("--table", table, "components|mask_strategy|scale|beta|alpha_strategy")->required();
  ablate->add_option("-o,--out", out_dir, "Output directory (overrides output_dir)");

  auto* occl = app.add_subcommand("occlusion", "Patch-dropping robustness curves");
  cfg_args.add_to(occl);
  occl->add_option("--checkpoint", checkpoint)->required();
  occl->add_option("--modes", modes, "Comma-separated: random,salient,nonsalient");
  occl->add_option("--ratios", ratios, "Comma-separated ascending drop ratios");
  occl->add_option("-o,--out", out_file, "CSV path (stdout when omitted)");

  auto* vis = app.add_subcommand("visualize", "Dump mixed pairs and attention maps as PPM/PGM");
  cfg_args.add_to(vis);
  vis->add_option("--checkpoint", checkpoint)->required();
  vis->add_option("-n,--pairs", n_pairs, "Number of pairs");
  vis->add_option("-o,--out", out_dir, "Output directory")->required();

  auto* grad = app.add_subcommand("gradcheck", "Finite-difference check of every op and the toy ViT");
  grad->add_option("--seed", gc_seed, "First seed");
  grad->add_option("--seeds", gc_seeds, "Number of seeds")->check(CLI::PositiveNumber);
  grad->add_option("--corrupt", corrupt, "Test hook: perturb the analytic gradient of one op")
      ->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*train) return cmd_train(cfg_args, out_dir, quiet);
    if (*eval) return cmd_eval(cfg_args, checkpoint, split);
    if (*ablate) return cmd_ablate(cfg_args, table, out_dir);
    if (*occl) return cmd_occlusion(cfg_args, checkpoint, modes, ratios, out_file);
    if (*vis) return cmd_visualize(cfg_args, checkpoint, n_pairs, out_dir);
    if (*grad) return cmd_gradcheck(gc_seed, gc_seeds, corrupt);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const IoError& e) {
    std::fprintf(stderr, "I/O error: %s\n", e.what());
    return kExitIo;
  } catch (const FormatError& e) {
    std::fprintf(stderr, "format error: %s\n", e.what());
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    std::fprintf(stderr, "I/O error: %s\n", e.what());
    return kExitIo;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  }
  return kExitConfig;
}
