// Copyright 2026 The MixPro Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "mixpro/ablation.hpp"

#include "mixpro/error.hpp"
#include "mixpro/training.hpp"

namespace mixpro::training {

namespace {

using labeling::AlphaKind;
using maskmix::Strategy;

AblationRow mix_row(std::string name, Strategy mask, std::optional<std::size_t> k, AlphaKind alpha) {
  return {std::move(name), [=](TrainConfig& c) {
            c.mask_strategy = mask;
            if (k) c.scale_k = *k;
            c.alpha_strategy = alpha;
          }};
}

}  // namespace

const std::vector<std::string>& ablation_tables() {
  static const std::vector<std::string> names{"components", "mask_strategy", "scale", "beta",
                                              "alpha_strategy"};
  return names;
}

std::vector<AblationRow> ablation_rows(const std::string& table) {
  if (table == "components") {
    return {
        mix_row("CutMix", Strategy::kRegion, std::nullopt, AlphaKind::kAreaOnly),
        mix_row("CutMix+TransMix", Strategy::kRegion, std::nullopt, AlphaKind::kAttnOnly),
        mix_row("TransMix+MaskMix", Strategy::kGrid, std::nullopt, AlphaKind::kAttnOnly),
        mix_row("CutMix+TransMix+PAL", Strategy::kRegion, std::nullopt, AlphaKind::kPalCosine),
        mix_row("MaskMix+PAL", Strategy::kGrid, std::nullopt, AlphaKind::kPalCosine),
    };
  }
  if (table == "mask_strategy") {
    return {
        mix_row("region", Strategy::kRegion, std::nullopt, AlphaKind::kAreaOnly),
        mix_row("block", Strategy::kBlock, std::nullopt, AlphaKind::kAreaOnly),
        mix_row("random", Strategy::kGrid, 1, AlphaKind::kAreaOnly),
        mix_row("random_4x", Strategy::kGrid, 4, AlphaKind::kAreaOnly),
    };
  }
  if (table == "scale") {
    std::vector<AblationRow> rows;
    for (std::size_t k : {1, 2, 4}) {
      rows.push_back(mix_row(std::to_string(k) + "x", Strategy::kGrid, k, AlphaKind::kPalCosine));
    }
    return rows;
  }
  if (table == "beta") {
    std::vector<AblationRow> rows;
    for (const char* b : {"0.5", "0.8", "1", "2"}) {
      rows.push_back({b, [b](TrainConfig& c) {
                        c.mask_strategy = Strategy::kGrid;
                        c.alpha_strategy = AlphaKind::kPalCosine;
                        c.beta = std::stod(b);
                      }});
    }
    return rows;
  }
  if (table == "alpha_strategy") {
    std::vector<AblationRow> rows;
    for (AlphaKind a : {AlphaKind::kEqual, AlphaKind::kLinear, AlphaKind::kParabolic,
                        AlphaKind::kPalCosine}) {
      rows.push_back(mix_row(labeling::to_string(a), Strategy::kGrid, std::nullopt, a));
    }
    return rows;
  }
  throw ConfigError("unknown ablation table '" + table +
                    "' (expected components, mask_strategy, scale, beta or alpha_strategy)");
}

std::vector<AblationResult> run_ablation(const TrainConfig& base, const std::string& table,
                                         const Split& data,
                                         const std::optional<std::filesystem::path>& out_dir,
                                         const std::function<void(const AblationResult&)>& on_row) {
  const auto rows = ablation_rows(table);
  std::vector<AblationResult> results;
  for (const AblationRow& row : rows) {
    AblationResult r;
    r.table = table;
    r.row = row.name;
    r.config = base;
    row.apply(r.config);
    r.config.validate();
    vit::ViTParams params = vit::init_params(r.config.model, r.config.seed);
    LoopOutputs outputs;
    if (out_dir) outputs.metrics_csv = *out_dir / table / (row.name + ".csv");
    const LoopResult loop = train_loop(r.config, data.train, data.val, params, outputs);
    const MetricsRecord& last = loop.records.back();
    r.val_top1 = last.val_top1;
    r.final_train_loss = last.train_loss;
    r.final_alpha_mean = last.alpha_mean;
    results.push_back(r);
    if (on_row) on_row(r);
  }
  return results;
}

std::string ablation_csv(const std::vector<AblationResult>& results) {
  std::string out =
      "table,row,mask_strategy,scale_k,alpha_strategy,beta,val_top1,final_train_loss,"
      "final_alpha_mean\n";
  for (const AblationResult& r : results) {
    out += r.table + "," + r.row + "," + maskmix::to_string(r.config.mask_strategy) + "," +
           std::to_string(r.config.scale_k) + "," + labeling::to_string(r.config.alpha_strategy) +
           "," + format_g9(r.config.beta) + "," + format_g9(r.val_top1) + "," +
           format_g9(r.final_train_loss) + "," + format_g9(r.final_alpha_mean) + "\n";
  }
  return out;
}

}  // namespace mixpro::training
