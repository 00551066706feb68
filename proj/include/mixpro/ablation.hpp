// Copyright 2026 The MixPro Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mixpro/config.hpp"
#include "mixpro/dataset.hpp"

namespace mixpro::training {

struct AblationRow {
  std::string name;
  std::function<void(TrainConfig&)> apply;
};

/// "components", "mask_strategy", "scale", "beta", "alpha_strategy".
const std::vector<std::string>& ablation_tables();
/// Row set of one table, each a change to the base config. ConfigError for
/// an unknown table.
std::vector<AblationRow> ablation_rows(const std::string& table);

struct AblationResult {
  std::string table;
  std::string row;
  TrainConfig config;
  double val_top1 = 0.0;
  double final_train_loss = 0.0;
  double final_alpha_mean = 0.0;
};

/// One seeded training run per row, all from the same initial weights.
/// With `out_dir`, each row's metrics CSV goes to <out_dir>/<table>/<row>.csv.
std::vector<AblationResult> run_ablation(
    const TrainConfig& base, const std::string& table, const Split& data,
    const std::optional<std::filesystem::path>& out_dir = std::nullopt,
    const std::function<void(const AblationResult&)>& on_row = {});

/// "table,row,mask_strategy,scale_k,alpha_strategy,beta,val_top1,final_train_loss,final_alpha_mean"
std::string ablation_csv(const std::vector<AblationResult>& results);

}  // namespace mixpro::training
