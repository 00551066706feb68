// Copyright 2026 The MixPro Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "mixpro/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "mixpro/error.hpp"

namespace mixpro::training {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError("key '" + key + "': expected a number, got '" + v + "'");
  }
  return out;
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError("key '" + key + "': expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("key '" + key + "': expected true or false, got '" + v + "'");
}

std::vector<double> to_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_double(key, trim(item)));
  return out;
}

std::string fmt_list(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + fmt_double(v[i]);
  return out;
}

struct Field {
  std::function<void(TrainConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const TrainConfig&)> get;
};

template <typename T>
Field size_field(T TrainConfig::*member) {
  return {[member](TrainConfig& c, const std::string& k, const std::string& v) {
            c.*member = static_cast<T>(to_uint(k, v));
          },
          [member](const TrainConfig& c) { return std::to_string(c.*member); }};
}

Field double_field(double TrainConfig::*member) {
  return {[member](TrainConfig& c, const std::string& k, const std::string& v) {
            c.*member = to_double(k, v);
          },
          [member](const TrainConfig& c) { return fmt_double(c.*member); }};
}

Field model_size(std::size_t vit::ViTConfig::*member) {
  return {[member](TrainConfig& c, const std::string& k, const std::string& v) {
            c.model.*member = to_uint(k, v);
          },
          [member](const TrainConfig& c) { return std::to_string(c.model.*member); }};
}

Field model_double(double vit::ViTConfig::*member) {
  return {[member](TrainConfig& c, const std::string& k, const std::string& v) {
            c.model.*member = to_double(k, v);
          },
          [member](const TrainConfig& c) { return fmt_double(c.model.*member); }};
}

Field string_field(std::string TrainConfig::*member) {
  return {[member](TrainConfig& c, const std::string&, const std::string& v) { c.*member = v; },
          [member](const TrainConfig& c) { return c.*member; }};
}

// Ordered as written by config_entries.
const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = {
      {"image_size", model_size(&vit::ViTConfig::image_size)},
      {"channels", model_size(&vit::ViTConfig::channels)},
      {"patch_size", model_size(&vit::ViTConfig::patch_size)},
      {"embed_dim", model_size(&vit::ViTConfig::embed_dim)},
      {"heads", model_size(&vit::ViTConfig::heads)},
      {"depth", model_size(&vit::ViTConfig::depth)},
      {"mlp_ratio", model_double(&vit::ViTConfig::mlp_ratio)},
      {"num_classes", model_size(&vit::ViTConfig::num_classes)},
      {"drop_path", model_double(&vit::ViTConfig::drop_path_rate)},
      {"beta", double_field(&TrainConfig::beta)},
      {"mask_strategy",
       {[](TrainConfig& c, const std::string&, const std::string& v) {
          c.mask_strategy = maskmix::parse_strategy(v);
        },
        [](const TrainConfig& c) { return maskmix::to_string(c.mask_strategy); }}},
      {"scale_k", size_field(&TrainConfig::scale_k)},
      {"alpha_strategy",
       {[](TrainConfig& c, const std::string&, const std::string& v) {
          c.alpha_strategy = labeling::parse_alpha_kind(v);
        },
        [](const TrainConfig& c) { return labeling::to_string(c.alpha_strategy); }}},
      {"mixup_alpha", double_field(&TrainConfig::mixup_alpha)},
      {"mixpro_switch_prob", double_field(&TrainConfig::mixpro_switch_prob)},
      {"label_smoothing", double_field(&TrainConfig::label_smoothing)},
      {"epochs", size_field(&TrainConfig::epochs)},
      {"batch_size", size_field(&TrainConfig::batch_size)},
      {"base_lr", double_field(&TrainConfig::base_lr)},
      {"min_lr", double_field(&TrainConfig::min_lr)},
      {"weight_decay", double_field(&TrainConfig::weight_decay)},
      {"warmup_epochs", size_field(&TrainConfig::warmup_epochs)},
      {"seed", size_field(&TrainConfig::seed)},
      {"dataset", string_field(&TrainConfig::dataset)},
      {"data_dir", string_field(&TrainConfig::data_dir)},
      {"synth_per_class", size_field(&TrainConfig::synth_per_class)},
      {"val_fraction", double_field(&TrainConfig::val_fraction)},
      {"norm_mean",
       {[](TrainConfig& c, const std::string& k, const std::string& v) {
          c.norm.mean = to_list(k, v);
        },
        [](const TrainConfig& c) { return fmt_list(c.norm.mean); }}},
      {"norm_std",
       {[](TrainConfig& c, const std::string& k, const std::string& v) {
          c.norm.std = to_list(k, v);
        },
        [](const TrainConfig& c) { return fmt_list(c.norm.std); }}},
      {"eval_batch_size", size_field(&TrainConfig::eval_batch_size)},
      {"output_dir", string_field(&TrainConfig::output_dir)},
      {"log_lambdas",
       {[](TrainConfig& c, const std::string& k, const std::string& v) {
          c.log_lambdas = to_bool(k, v);
        },
        [](const TrainConfig& c) { return std::string(c.log_lambdas ? "true" : "false"); }}},
  };
  return table;
}

void require(bool ok, const std::string& key, const std::string& why) {
  if (!ok) throw ConfigError("key '" + key + "': " + why);
}

bool unit(double p) { return p >= 0.0 && p <= 1.0; }

}  // namespace

void TrainConfig::validate() const {
  try {
    model.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("model geometry: ") + e.what());
  }
  require(beta > 0.0, "beta", "must be positive");
  require(mixup_alpha > 0.0, "mixup_alpha", "must be positive");
  require(unit(mixpro_switch_prob), "mixpro_switch_prob", "must lie in [0, 1]");
  require(label_smoothing >= 0.0 && label_smoothing < 1.0, "label_smoothing",
          "must lie in [0, 1)");
  require(epochs >= 1, "epochs", "must be at least 1");
  require(batch_size >= 2, "batch_size", "must be at least 2 to form pairs");
  require(eval_batch_size >= 1, "eval_batch_size", "must be at least 1");
  require(base_lr > 0.0, "base_lr", "must be positive");
  require(min_lr >= 0.0 && min_lr <= base_lr, "min_lr", "must lie in [0, base_lr]");
  require(weight_decay >= 0.0, "weight_decay", "must be non-negative");
  require(warmup_epochs < epochs, "warmup_epochs", "must be smaller than epochs");
  require(scale_k >= 1, "scale_k", "must be at least 1");
  if (mask_strategy == maskmix::Strategy::kGrid) {
    const std::size_t pm = scale_k * model.patch_size;
    require(model.image_size % pm == 0, "scale_k",
            "mask patch " + std::to_string(pm) + " px does not divide the " +
                std::to_string(model.image_size) + " px image");
  }
  require(dataset == "synth" || dataset == "cifar10", "dataset", "must be synth or cifar10");
  require(dataset != "cifar10" || !data_dir.empty(), "data_dir", "required for cifar10");
  require(dataset != "cifar10" || (model.image_size == 32 && model.channels == 3 &&
                                   model.num_classes == 10),
          "dataset", "cifar10 needs image_size 32, channels 3, num_classes 10");
  require(dataset != "synth" || model.channels == 3, "channels", "synth images have 3 channels");
  require(synth_per_class >= 1, "synth_per_class", "must be at least 1");
  require(val_fraction > 0.0 && val_fraction < 1.0, "val_fraction", "must lie in (0, 1)");
  require(norm.mean.size() == model.channels, "norm_mean", "needs one value per channel");
  require(norm.std.size() == model.channels, "norm_std", "needs one value per channel");
  for (double s : norm.std) require(s > 0.0, "norm_std", "values must be positive");
}

std::vector<std::pair<std::string, std::string>> config_entries(const TrainConfig& cfg) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& [key, field] : fields()) out.emplace_back(key, field.get(cfg));
  return out;
}

void apply_setting(TrainConfig& cfg, const std::string& key, const std::string& value) {
  static const std::map<std::string, const Field*> index = [] {
    std::map<std::string, const Field*> m;
    for (const auto& [k, f] : fields()) m[k] = &f;
    return m;
  }();
  const auto it = index.find(key);
  if (it == index.end()) throw ConfigError("unknown config key '" + key + "'");
  try {
    it->second->set(cfg, key, value);
  } catch (const ConfigError& e) {
    const std::string what = e.what();
    if (what.find("'" + key + "'") != std::string::npos) throw;
    throw ConfigError("key '" + key + "': " + what);
  }
}

TrainConfig parse_config(const std::string& text, const std::string& source) {
  TrainConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = source + ":" + std::to_string(number) + ": ";
    if (eq == std::string::npos) throw ConfigError(where + "expected 'key = value'");
    try {
      apply_setting(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  return cfg;
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string());
}

std::string format_config(const TrainConfig& cfg) {
  std::string out;
  for (const auto& [k, v] : config_entries(cfg)) out += k + " = " + v + "\n";
  return out;
}

}  // namespace mixpro::training
