// Copyright 2026 The MixPro Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "mixpro/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>

#include "mixpro/error.hpp"
#include "mixpro/ops.hpp"

namespace mixpro::gradcheck {

using ad::Graph;
using ad::Tensor;
using ad::Var;

const CheckResult& SuiteReport::worst() const {
  if (checks.empty()) throw ContractError("empty gradient-check report");
  return *std::max_element(checks.begin(), checks.end(), [](const auto& a, const auto& b) {
    return a.max_rel_error < b.max_rel_error;
  });
}

bool SuiteReport::passed(double tolerance) const {
  return std::all_of(checks.begin(), checks.end(),
                     [&](const CheckResult& c) { return c.max_rel_error < tolerance; });
}

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) /
         std::max({std::abs(analytic), std::abs(numeric), 1e-6});
}

vit::ViTConfig toy_config() {
  vit::ViTConfig c;
  c.image_size = 16;
  c.channels = 3;
  c.patch_size = 4;
  c.embed_dim = 16;
  c.heads = 2;
  c.depth = 2;
  c.mlp_ratio = 4.0;
  c.num_classes = 5;
  c.drop_path_rate = 0.2;
  return c;
}

namespace {

constexpr double kCorruption = 1.01;

Tensor random_tensor(ad::Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = lo + (hi - lo) * uniform01(rng);
  return t;
}

class Accumulator {
 public:
  void add(const std::string& name, double err) {
    auto [it, inserted] = index_.try_emplace(name, report_.checks.size());
    if (inserted) report_.checks.push_back({name, 0.0, 0});
    CheckResult& c = report_.checks[it->second];
    c.max_rel_error = std::max(c.max_rel_error, err);
    c.comparisons += 1;
  }
  SuiteReport take() { return std::move(report_); }

 private:
  SuiteReport report_;
  std::map<std::string, std::size_t> index_;
};

using OpBuilder = std::function<Var(const std::vector<Var>&)>;

struct OpCase {
  const char* name;
  std::vector<ad::Shape> shapes;
  OpBuilder build;
  double lo = -1.0, hi = 1.0;
};

std::vector<OpCase> op_cases(Rng& rng) {
  Tensor targets = ad::softmax_rows(random_tensor({3, 4}, rng, -2, 2));
  return {
      {"add", {{2, 3, 4}, {3, 4}}, [](auto& v) { return ad::add(v[0], v[1]); }},
      {"mul", {{3, 4}, {3, 4}}, [](auto& v) { return ad::mul(v[0], v[1]); }},
      {"scale", {{5}}, [](auto& v) { return ad::scale(v[0], 0.7); }},
      {"square", {{5}}, [](auto& v) { return ad::square(v[0]); }},
      {"sum", {{2, 3}}, [](auto& v) { return ad::sum(v[0]); }},
      {"matmul", {{3, 4}, {4, 2}}, [](auto& v) { return ad::matmul(v[0], v[1]); }},
      {"linear", {{2, 3, 4}, {4, 5}}, [](auto& v) { return ad::linear(v[0], v[1]); }},
      {"bmm", {{2, 3, 4}, {2, 4, 2}}, [](auto& v) { return ad::bmm(v[0], v[1]); }},
      {"bmm_transposed", {{2, 3, 4}, {2, 5, 4}}, [](auto& v) { return ad::bmm(v[0], v[1], true); }},
      {"reshape", {{2, 6}}, [](auto& v) { return ad::reshape(v[0], {3, 4}); }},
      {"permute", {{2, 3, 4, 2}}, [](auto& v) { return ad::permute(v[0], {0, 2, 1, 3}); }},
      {"slice", {{2, 5, 3}}, [](auto& v) { return ad::slice(v[0], 1, 1, 3); }},
      {"concat", {{2, 1, 3}, {2, 4, 3}}, [](auto& v) { return ad::concat({v[0], v[1]}, 1); }},
      {"repeat_leading", {{2, 3}}, [](auto& v) { return ad::repeat_leading(v[0], 3); }},
      {"scale_leading", {{3, 2, 2}},
       [](auto& v) {
         const std::vector<double> f{0.0, 1.25, -2.0};
         return ad::scale_leading(v[0], f);
       }},
      {"softmax", {{3, 5}}, [](auto& v) { return ad::softmax(v[0], 1); }, -3.0, 3.0},
      {"layer_norm", {{3, 6}, {6}, {6}},
       [](auto& v) { return ad::layer_norm(v[0], v[1], v[2]); }, -2.0, 2.0},
      {"gelu", {{10}}, [](auto& v) { return ad::gelu(v[0]); }, -4.0, 4.0},
      {"cross_entropy_soft", {{3, 4}},
       [targets](auto& v) { return ad::cross_entropy_soft(v[0], targets); }, -2.0, 2.0},
  };
}

void check_op(const OpCase& op, Rng& rng, const SuiteOptions& opt, Accumulator& acc) {
  std::vector<Tensor> inputs;
  for (const auto& s : op.shapes) inputs.push_back(random_tensor(s, rng, op.lo, op.hi));
  Tensor weights;
  auto loss_of = [&](bool track) {
    Graph g;
    std::vector<Var> vars;
    for (Tensor& x : inputs) {
      vars.push_back(track ? g.leaf(x) : g.leaf(static_cast<const Tensor&>(x)));
    }
    Var out = op.build(vars);
    if (weights.size() == 0) weights = random_tensor(out.shape(), rng);
    Var loss = ad::sum(ad::mul(out, g.constant(weights)));
    if (track) g.backward(loss);
    return loss.value().item();
  };
  for (Tensor& x : inputs) x.set_requires_grad(true);
  loss_of(true);
  const double corruption = opt.corrupt_op == op.name ? kCorruption : 1.0;
  for (Tensor& x : inputs) {
    for (std::size_t j = 0; j < x.size(); ++j) {
      const double analytic = x.grad()[j] * corruption;
      const double saved = x[j];
      x[j] = saved + opt.step;
      const double up = loss_of(false);
      x[j] = saved - opt.step;
      const double down = loss_of(false);
      x[j] = saved;
      acc.add(op.name, relative_error(analytic, (up - down) / (2.0 * opt.step)));
    }
  }
}

void check_model(std::uint64_t seed, bool exhaustive, const SuiteOptions& opt, Accumulator& acc) {
  const vit::ViTConfig cfg = toy_config();
  Rng rng = make_stream(seed, {kTagGradcheck});
  vit::ViTParams params = vit::init_params(cfg, seed);
  // Spread the weights well beyond the 0.02 init scale so attention and
  // GELU operate away from their linear regimes.
  const auto names = params.names();
  const auto tensors = params.tensors();
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const bool gain = names[i].find("norm") != std::string::npos &&
                      names[i].find("weight") != std::string::npos;
    for (double& v : tensors[i]->data()) {
      v = gain ? 1.0 + 0.4 * (uniform01(rng) - 0.5) : 0.8 * (uniform01(rng) - 0.5);
    }
  }
  const std::size_t batch_size = 2;
  Tensor batch = random_tensor({batch_size, cfg.channels, cfg.image_size, cfg.image_size}, rng);
  Tensor targets = ad::softmax_rows(random_tensor({batch_size, cfg.num_classes}, rng, -2, 2));

  // Train mode with a replayed stream: the drop-path pattern is identical
  // on every evaluation, so the loss is a smooth function of the weights.
  auto loss_value = [&]() {
    Rng dp = make_stream(seed, {kTagGradcheck, 1});
    auto out = vit::forward(static_cast<const vit::ViTParams&>(params), batch, vit::Mode::kTrain, dp);
    Graph g;
    return ad::cross_entropy_soft(g.constant(out.logits), targets).value().item();
  };
  params.set_requires_grad(true);
  {
    Graph g;
    Rng dp = make_stream(seed, {kTagGradcheck, 1});
    auto fwd = vit::forward(g, params, batch, vit::Mode::kTrain, dp);
    g.backward(ad::cross_entropy_soft(fwd.logits, targets));
  }

  for (std::size_t i = 0; i < tensors.size(); ++i) {
    Tensor& t = *tensors[i];
    const std::string name = "vit:" + names[i];
    const double corruption = opt.corrupt_op == name ? kCorruption : 1.0;
    std::vector<double> grad(t.grad().begin(), t.grad().end());
    for (double& g : grad) g *= corruption;

    auto central = [&](auto&& perturb) {
      const std::vector<double> saved(t.data().begin(), t.data().end());
      perturb(+opt.step);
      const double up = loss_value();
      std::copy(saved.begin(), saved.end(), t.data().begin());
      perturb(-opt.step);
      const double down = loss_value();
      std::copy(saved.begin(), saved.end(), t.data().begin());
      return (up - down) / (2.0 * opt.step);
    };

    // Directional derivative along a random unit direction covers every
    // coordinate of the tensor at once.
    std::vector<double> dir(t.size());
    double norm = 0.0;
    for (double& d : dir) {
      d = uniform01(rng) - 0.5;
      norm += d * d;
    }
    norm = std::sqrt(norm);
    double analytic_dir = 0.0;
    for (std::size_t j = 0; j < dir.size(); ++j) {
      dir[j] /= norm;
      analytic_dir += grad[j] * dir[j];
    }
    const double numeric_dir = central([&](double h) {
      for (std::size_t j = 0; j < dir.size(); ++j) t[j] += h * dir[j];
    });
    acc.add(name, relative_error(analytic_dir, numeric_dir));

    std::vector<std::size_t> coords;
    if (exhaustive) {
      coords.resize(t.size());
      for (std::size_t j = 0; j < t.size(); ++j) coords[j] = j;
    } else {
      for (std::size_t s = 0; s < opt.samples_per_tensor; ++s) {
        coords.push_back(static_cast<std::size_t>(uniform_index(rng, t.size())));
      }
    }
    for (std::size_t j : coords) {
      const double numeric = central([&](double h) { t[j] += h; });
      acc.add(name, relative_error(grad[j], numeric));
    }
  }
}

}  // namespace

SuiteReport run_op_checks(const SuiteOptions& options) {
  Accumulator acc;
  for (int s = 0; s < options.seeds; ++s) {
    Rng rng = make_stream(options.seed + static_cast<std::uint64_t>(s), {kTagGradcheck, 2});
    for (const OpCase& op : op_cases(rng)) check_op(op, rng, options, acc);
  }
  return acc.take();
}

SuiteReport run_model_checks(const SuiteOptions& options) {
  Accumulator acc;
  for (int s = 0; s < options.seeds; ++s) {
    check_model(options.seed + static_cast<std::uint64_t>(s),
                options.exhaustive_first_seed && s == 0, options, acc);
  }
  return acc.take();
}

SuiteReport run_suite(const SuiteOptions& options) {
  SuiteReport report = run_op_checks(options);
  SuiteReport model = run_model_checks(options);
  report.checks.insert(report.checks.end(), model.checks.begin(), model.checks.end());
  return report;
}

}  // namespace mixpro::gradcheck
