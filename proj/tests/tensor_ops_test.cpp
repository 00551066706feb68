// Copyright 2026 The MixPro Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "mixpro/error.hpp"
#include "mixpro/ops.hpp"
#include "mixpro/optim.hpp"
#include "support/finite_difference.hpp"

namespace mixpro::ad {
namespace {

using testing::op_gradient_error;
using testing::random_tensor;

constexpr int kSeeds = 100;
constexpr double kGradTol = 1e-4;

TEST(Tensor, ShapeMustMatchData) {
  EXPECT_THROW(Tensor({2, 3}, std::vector<double>(5)), DimensionError);
  Tensor t({2, 3}, 1.5);
  EXPECT_EQ(t.size(), 6u);
  EXPECT_FALSE(t.requires_grad());
  EXPECT_TRUE(t.grad().empty());
  t.set_requires_grad(true);
  EXPECT_EQ(t.grad().size(), t.size());
}

TEST(Matmul, IdentityAndArithmetic) {
  Graph g;
  Var a = g.constant(Tensor({2, 2}, {1, 2, 3, 4}));
  Var eye = g.constant(Tensor({2, 2}, {1, 0, 0, 1}));
  EXPECT_EQ(matmul(a, eye).value().vector(), (std::vector<double>{1, 2, 3, 4}));

  Var row = g.constant(Tensor({1, 2}, {1, 2}));
  Var col = g.constant(Tensor({2, 1}, {3, 4}));
  EXPECT_EQ(matmul(row, col).value().item(), 11.0);
}

TEST(Matmul, ShapeMismatchIsDimensionError) {
  Graph g;
  Var a = g.constant(Tensor({2, 3}));
  Var b = g.constant(Tensor({2, 3}));
  EXPECT_THROW(matmul(a, b), DimensionError);
}

TEST(Matmul, GradientOfSumMatchesFiniteDifferences) {
  for (int seed = 0; seed < kSeeds; ++seed) {
    Rng rng = make_stream(static_cast<std::uint64_t>(seed), {11});
    Tensor a = random_tensor({3, 4}, rng);
    Tensor b = random_tensor({4, 2}, rng);
    a.set_requires_grad(true);
    Graph g;
    Var loss = sum(matmul(g.leaf(a), g.constant(b)));
    g.backward(loss);
    // d sum(AB)/dA_ij = Σ_n B_jn, checked by central differences.
    for (std::size_t i = 0; i < a.size(); ++i) {
      auto value_at = [&](double delta) {
        Tensor p = a.reshaped(a.shape());
        p[i] += delta;
        Graph h;
        return sum(matmul(h.constant(p), h.constant(b))).value().item();
      };
      const double numeric = (value_at(1e-4) - value_at(-1e-4)) / 2e-4;
      EXPECT_LT(testing::relative_error(a.grad()[i], numeric), 1e-6);
    }
  }
}

TEST(Softmax, ClosedForms) {
  Graph g;
  Var s = softmax(g.constant(Tensor({2}, {0.0, 0.0})), 0);
  EXPECT_DOUBLE_EQ(s.value()[0], 0.5);
  EXPECT_DOUBLE_EQ(s.value()[1], 0.5);
  Var t = softmax(g.constant(Tensor({2}, {std::log(1.0), std::log(3.0)})), 0);
  EXPECT_NEAR(t.value()[0], 0.25, 1e-15);
  EXPECT_NEAR(t.value()[1], 0.75, 1e-15);
}

TEST(Softmax, ShiftInvarianceAndSimplexRows) {
  for (int seed = 0; seed < kSeeds; ++seed) {
    Rng rng = make_stream(static_cast<std::uint64_t>(seed), {12});
    Tensor x = random_tensor({4, 7}, rng, -20.0, 20.0);
    Tensor shifted = x.reshaped(x.shape());
    const double c = 100.0 * (uniform01(rng) - 0.5);
    for (double& v : shifted.data()) v += c;
    Graph g;
    const Tensor& y = softmax(g.constant(x), 1).value();
    const Tensor& ys = softmax(g.constant(shifted), 1).value();
    for (std::size_t r = 0; r < 4; ++r) {
      double total = 0.0;
      for (std::size_t j = 0; j < 7; ++j) {
        const double v = y[r * 7 + j];
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
        EXPECT_NEAR(v, ys[r * 7 + j], 1e-12);
        total += v;
      }
      EXPECT_NEAR(total, 1.0, 1e-12);
    }
  }
}

TEST(Softmax, NonLastAxis) {
  Graph g;
  Var s = softmax(g.constant(Tensor({2, 2}, {0.0, std::log(3.0), 0.0, 0.0})), 0);
  EXPECT_NEAR(s.value()[0], 0.5, 1e-15);
  EXPECT_NEAR(s.value()[1], 0.75, 1e-15);
}

TEST(LayerNorm, ConstantSliceGivesZeros) {
  Graph g;
  Var y = layer_norm(g.constant(Tensor({1, 4}, 3.25)), g.constant(Tensor({4}, 1.0)),
                     g.constant(Tensor({4}, 0.0)));
  for (double v : y.value().data()) EXPECT_EQ(v, 0.0);
}

TEST(LayerNorm, UnitVarianceClosedForm) {
  Graph g;
  Var y = layer_norm(g.constant(Tensor({2}, {1.0, -1.0})), g.constant(Tensor({2}, 1.0)),
                     g.constant(Tensor({2}, 0.0)), 1e-12);
  EXPECT_NEAR(y.value()[0], 1.0, 1e-11);
  EXPECT_NEAR(y.value()[1], -1.0, 1e-11);
}

TEST(LayerNorm, NormalizedStatistics) {
  Rng rng = make_stream(5);
  Graph g;
  Var y = layer_norm(g.constant(random_tensor({3, 16}, rng, -4, 9)), g.constant(Tensor({16}, 1.0)),
                     g.constant(Tensor({16}, 0.0)));
  for (std::size_t r = 0; r < 3; ++r) {
    double m = 0.0, v = 0.0;
    for (std::size_t j = 0; j < 16; ++j) m += y.value()[r * 16 + j];
    m /= 16;
    for (std::size_t j = 0; j < 16; ++j) v += std::pow(y.value()[r * 16 + j] - m, 2);
    v /= 16;
    EXPECT_NEAR(m, 0.0, 1e-12);
    EXPECT_NEAR(v, 1.0, 1e-5);
  }
}

TEST(Gelu, Asymptotes) {
  Graph g;
  Var y = gelu(g.constant(Tensor({3}, {0.0, 10.0, -10.0})));
  EXPECT_EQ(y.value()[0], 0.0);
  EXPECT_NEAR(y.value()[1], 10.0, 1e-12);
  EXPECT_NEAR(y.value()[2], 0.0, 1e-12);
}

TEST(CrossEntropy, UniformLogitsOneHot) {
  Graph g;
  Tensor target({1, 10});
  target[3] = 1.0;
  Var loss = cross_entropy_soft(g.constant(Tensor({1, 10}, 0.0)), target);
  EXPECT_NEAR(loss.value().item(), std::log(10.0), 1e-15);
}

TEST(CrossEntropy, MinimumIsTargetEntropy) {
  Rng rng = make_stream(3);
  Tensor logits = random_tensor({2, 5}, rng, -2, 2);
  Tensor target = softmax_rows(logits);
  double entropy = 0.0;
  for (double p : target.data()) entropy -= p * std::log(p);
  entropy /= 2.0;
  Graph g;
  EXPECT_NEAR(cross_entropy_soft(g.constant(logits), target).value().item(), entropy, 1e-12);
  // Any other logits do worse (Gibbs).
  Tensor other = random_tensor({2, 5}, rng, -2, 2);
  EXPECT_GT(cross_entropy_soft(g.constant(other), target).value().item(), entropy);
}

TEST(CrossEntropy, RejectsNonDistributionTargets) {
  Graph g;
  Var logits = g.constant(Tensor({1, 3}));
  EXPECT_THROW(cross_entropy_soft(logits, Tensor({1, 3}, {0.5, 0.5, 0.1})), ContractError);
  EXPECT_THROW(cross_entropy_soft(logits, Tensor({1, 3}, {1.5, -0.5, 0.0})), ContractError);
  EXPECT_THROW(cross_entropy_soft(logits, Tensor({1, 2}, {1.0, 0.0})), DimensionError);
}

TEST(Backward, SumAndSquareClosedForms) {
  Tensor theta({2}, {1.0, 2.0});
  theta.set_requires_grad(true);
  {
    Graph g;
    g.backward(sum(g.leaf(theta)));
    EXPECT_EQ(std::vector<double>(theta.grad().begin(), theta.grad().end()),
              (std::vector<double>{1.0, 1.0}));
  }
  theta.zero_grad();
  {
    Graph g;
    g.backward(sum(square(g.leaf(theta))));
    EXPECT_EQ(std::vector<double>(theta.grad().begin(), theta.grad().end()),
              (std::vector<double>{2.0, 4.0}));
  }
}

TEST(Backward, GradientsAccumulateAcrossPasses) {
  Tensor theta({2}, {1.0, 2.0});
  theta.set_requires_grad(true);
  for (int i = 0; i < 2; ++i) {
    Graph g;
    g.backward(sum(g.leaf(theta)));
  }
  EXPECT_EQ(theta.grad()[0], 2.0);
}

TEST(Backward, ContractErrors) {
  Tensor theta({2}, {1.0, 2.0});
  theta.set_requires_grad(true);
  Graph g;
  Var v = square(g.leaf(theta));
  EXPECT_THROW(g.backward(v), ContractError);
  Var loss = sum(v);
  g.backward(loss);
  EXPECT_THROW(g.backward(loss), ContractError);
  g.reset();
  EXPECT_EQ(g.size(), 0u);
  Graph other;
  Var foreign = other.constant(Tensor::scalar(1.0));
  EXPECT_THROW(g.backward(foreign), ContractError);
}

TEST(Backward, IndependentTensorGetsExactlyZeroGradient) {
  Tensor used({3}, {1.0, -2.0, 0.5});
  Tensor unused({2}, {4.0, 5.0});
  used.set_requires_grad(true);
  unused.set_requires_grad(true);
  Graph g;
  g.leaf(unused);
  g.backward(sum(square(g.leaf(used))));
  for (double v : unused.grad()) EXPECT_EQ(v, 0.0);
}

TEST(Backward, VisitsTopologicalOrder) {
  Tensor theta({2}, {1.0, 2.0});
  theta.set_requires_grad(true);
  Graph g;
  Var a = g.leaf(theta);
  Var b = square(a);
  Var c = add(b, a);
  Var loss = sum(c);
  for (std::size_t id = 0; id < g.size(); ++id) {
    for (std::size_t in : g.inputs(id)) EXPECT_LT(in, id);
  }
  g.backward(loss);
  // d/dθ Σ(θ² + θ) = 2θ + 1
  EXPECT_EQ(theta.grad()[0], 3.0);
  EXPECT_EQ(theta.grad()[1], 5.0);
}

// Every differentiable op against central differences, 100 seeds each.
class OpGradient : public ::testing::TestWithParam<int> {};

TEST_P(OpGradient, AllOpsMatchFiniteDifferences) {
  const auto seed = static_cast<std::uint64_t>(GetParam());
  Rng rng = make_stream(seed, {13});
  auto check = [&](const char* name, std::vector<Tensor> inputs, const testing::OpBuilder& op) {
    EXPECT_LT(op_gradient_error(std::move(inputs), op, rng), kGradTol) << name << " seed " << seed;
  };
  check("add", {random_tensor({2, 3, 4}, rng), random_tensor({3, 4}, rng)},
        [](Graph&, const std::vector<Var>& v) { return add(v[0], v[1]); });
  check("mul", {random_tensor({3, 4}, rng), random_tensor({3, 4}, rng)},
        [](Graph&, const std::vector<Var>& v) { return mul(v[0], v[1]); });
  check("scale", {random_tensor({5}, rng)},
        [](Graph&, const std::vector<Var>& v) { return scale(v[0], -1.7); });
  check("square", {random_tensor({5}, rng)},
        [](Graph&, const std::vector<Var>& v) { return square(v[0]); });
  check("mean", {random_tensor({2, 3}, rng)},
        [](Graph&, const std::vector<Var>& v) { return mean(v[0]); });
  check("matmul", {random_tensor({3, 4}, rng), random_tensor({4, 2}, rng)},
        [](Graph&, const std::vector<Var>& v) { return matmul(v[0], v[1]); });
  check("linear", {random_tensor({2, 3, 4}, rng), random_tensor({4, 5}, rng)},
        [](Graph&, const std::vector<Var>& v) { return linear(v[0], v[1]); });
  check("bmm", {random_tensor({2, 3, 4}, rng), random_tensor({2, 4, 2}, rng)},
        [](Graph&, const std::vector<Var>& v) { return bmm(v[0], v[1]); });
  check("bmm_t", {random_tensor({2, 3, 4}, rng), random_tensor({2, 5, 4}, rng)},
        [](Graph&, const std::vector<Var>& v) { return bmm(v[0], v[1], true); });
  check("reshape", {random_tensor({2, 6}, rng)},
        [](Graph&, const std::vector<Var>& v) { return reshape(v[0], {3, 4}); });
  check("permute", {random_tensor({2, 3, 4, 2}, rng)},
        [](Graph&, const std::vector<Var>& v) { return permute(v[0], {0, 2, 1, 3}); });
  check("slice", {random_tensor({2, 5, 3}, rng)},
        [](Graph&, const std::vector<Var>& v) { return slice(v[0], 1, 1, 3); });
  check("concat", {random_tensor({2, 1, 3}, rng), random_tensor({2, 4, 3}, rng)},
        [](Graph&, const std::vector<Var>& v) { return concat({v[0], v[1]}, 1); });
  check("repeat_leading", {random_tensor({2, 3}, rng)},
        [](Graph&, const std::vector<Var>& v) { return repeat_leading(v[0], 3); });
  check("scale_leading", {random_tensor({3, 2, 2}, rng)}, [](Graph&, const std::vector<Var>& v) {
    const std::vector<double> f{0.0, 1.25, -2.0};
    return scale_leading(v[0], f);
  });
  check("softmax", {random_tensor({3, 5}, rng, -3, 3)},
        [](Graph&, const std::vector<Var>& v) { return softmax(v[0], 1); });
  check("softmax_axis0", {random_tensor({4, 3}, rng, -3, 3)},
        [](Graph&, const std::vector<Var>& v) { return softmax(v[0], 0); });
  check("layer_norm",
        {random_tensor({3, 6}, rng, -2, 2), random_tensor({6}, rng), random_tensor({6}, rng)},
        [](Graph&, const std::vector<Var>& v) { return layer_norm(v[0], v[1], v[2]); });
  check("gelu", {random_tensor({10}, rng, -4, 4)},
        [](Graph&, const std::vector<Var>& v) { return gelu(v[0]); });
  Tensor targets = softmax_rows(random_tensor({3, 4}, rng, -2, 2));
  check("cross_entropy_soft", {random_tensor({3, 4}, rng, -2, 2)},
        [targets](Graph&, const std::vector<Var>& v) { return cross_entropy_soft(v[0], targets); });
}

INSTANTIATE_TEST_SUITE_P(Seeds, OpGradient, ::testing::Range(0, kSeeds));

TEST(AdamW, FirstStepFromZeroIsSignStep) {
  Tensor theta({3}, 0.0);
  theta.set_requires_grad(true);
  theta.grad()[0] = 0.3;
  theta.grad()[1] = -2.0;
  theta.grad()[2] = 1e-3;
  OptimizerState state;
  state.hyper.lr = 0.01;
  state.hyper.weight_decay = 0.05;
  Tensor* params[] = {&theta};
  adamw_step(params, state);
  EXPECT_EQ(state.t, 1u);
  const double g[] = {0.3, -2.0, 1e-3};
  for (int i = 0; i < 3; ++i) {
    EXPECT_NEAR(theta[i], -0.01 * g[i] / (std::abs(g[i]) + 1e-8), 1e-15);
    EXPECT_NEAR(theta[i], -0.01 * (g[i] > 0 ? 1 : -1), 1e-7);
  }
}

TEST(AdamW, ZeroGradient) {
  Tensor theta({2}, {1.0, -3.0});
  theta.set_requires_grad(true);
  Tensor* params[] = {&theta};
  OptimizerState no_decay;
  no_decay.hyper.weight_decay = 0.0;
  adamw_step(params, no_decay);
  EXPECT_EQ(theta[0], 1.0);
  EXPECT_EQ(theta[1], -3.0);

  OptimizerState decay;
  decay.hyper.lr = 0.1;
  decay.hyper.weight_decay = 0.05;
  adamw_step(params, decay);
  EXPECT_DOUBLE_EQ(theta[0], 1.0 * (1.0 - 0.1 * 0.05));
  EXPECT_DOUBLE_EQ(theta[1], -3.0 * (1.0 - 0.1 * 0.05));
}

TEST(AdamW, DecayMaskAndDeterminism) {
  Rng rng = make_stream(9);
  auto run = [&rng]() {
    Rng local = rng;
    Tensor a = random_tensor({4}, local);
    Tensor b = random_tensor({4}, local);
    a.set_requires_grad(true);
    b.set_requires_grad(true);
    OptimizerState st;
    Tensor* params[] = {&a, &b};
    const bool mask[] = {true, false};
    for (int step = 0; step < 5; ++step) {
      for (std::size_t i = 0; i < 4; ++i) {
        a.grad()[i] = uniform01(local) - 0.5;
        b.grad()[i] = uniform01(local) - 0.5;
      }
      adamw_step(params, st, mask);
    }
    EXPECT_EQ(st.t, 5u);
    std::vector<double> out(a.data().begin(), a.data().end());
    out.insert(out.end(), b.data().begin(), b.data().end());
    return out;
  };
  EXPECT_EQ(run(), run());
}

TEST(LearningRate, ScheduleEndpoints) {
  EXPECT_DOUBLE_EQ(lr_at_step(10, 10, 110, 1e-3, 1e-5), 1e-3);
  EXPECT_DOUBLE_EQ(lr_at_step(110, 10, 110, 1e-3, 1e-5), 1e-5);
  EXPECT_NEAR(lr_at_step(60, 10, 110, 1e-3, 1e-5), (1e-3 + 1e-5) / 2, 1e-18);
  EXPECT_DOUBLE_EQ(lr_at_step(5, 10, 110, 1e-3, 1e-5), 5e-4);
  EXPECT_EQ(lr_at_step(0, 10, 110, 1e-3, 1e-5), 0.0);
  EXPECT_THROW(lr_at_step(0, 10, 10, 1e-3, 0.0), ParameterError);
}

}  // namespace
}  // namespace mixpro::ad
