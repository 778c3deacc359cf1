#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <string>

#include "vlmech/autograd.hpp"
#include "vlmech/errors.hpp"
#include "vlmech/grad_check.hpp"
#include "vlmech/ops.hpp"
#include "vlmech/rng.hpp"
#include "vlmech/tensor.hpp"

using namespace vlmech;

namespace {

// Fixed random read-out so every output coordinate carries gradient.
Var readout(Tape& t, Var y, std::uint64_t seed) {
  Rng rng(seed ^ 0x5eedULL);
  std::vector<double> w(t.value(y).numel());
  for (double& v : w) v = rng.uniform(-1.0, 1.0);
  return weighted_sum(t, y, std::move(w));
}

constexpr int kSeeds = 32;
constexpr double kTol = 1e-5;

void check_all_seeds(const std::string& what, const std::function<Tensor(Rng&)>& make_x,
                     const std::function<Var(Tape&, Var, Rng&)>& body) {
  for (int s = 0; s < kSeeds; ++s) {
    Rng rng(1000 + s);
    const Tensor x = make_x(rng);
    const std::uint64_t aux_seed = rng.next_u64();
    const ScalarFn f = [&](Tape& t, Var v) {
      Rng aux(aux_seed);
      return readout(t, body(t, v, aux), aux_seed);
    };
    EXPECT_LT(grad_check(f, x, 1e-5), kTol) << what << " seed " << s;
  }
}

Tensor rand_mat(Rng& rng, std::size_t r, std::size_t c) { return Tensor::randn({r, c}, rng); }

}  // namespace

// ---- tensor -------------------------------------------------------------------

TEST(Tensor, ShapeMustMatchData) {
  EXPECT_THROW(Tensor({2, 3}, std::vector<double>(5)), ShapeError);
  const Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(t.rows(), 2u);
  EXPECT_EQ(t.cols(), 3u);
  EXPECT_EQ(t(1, 2), 6.0);
}

TEST(Tensor, BitIdenticalDistinguishesSignedZero) {
  EXPECT_TRUE(Tensor::vector({0.0}) == Tensor::vector({-0.0}));
  EXPECT_FALSE(bit_identical(Tensor::vector({0.0}), Tensor::vector({-0.0})));
}

TEST(Rng, SplitStreamsAreStableAndDistinct) {
  const Rng root(42);
  Rng a = root.split(1), b = root.split(1), c = root.split(2);
  const auto x = a.next_u64();
  EXPECT_EQ(x, b.next_u64());
  EXPECT_NE(x, c.next_u64());
}

TEST(Rng, BelowStaysInRange) {
  Rng rng(7);
  for (int i = 0; i < 10000; ++i) EXPECT_LT(rng.below(13), 13u);
}

// ---- matmul -----------------------------------------------------------------

TEST(Matmul, IdentityLeavesOperand) {
  const Tensor id = Tensor::matrix({{1, 0}, {0, 1}});
  const Tensor b = Tensor::matrix({{3, 4}, {5, 6}});
  EXPECT_EQ(matmul(id, b), b);
}

TEST(Matmul, HandArithmetic) { EXPECT_EQ(matmul(Tensor::matrix({{1, 2}}), Tensor::matrix({{3}, {4}})).item(), 11.0); }

TEST(Matmul, ZeroLeftOperand) {
  Rng rng(3);
  const Tensor b = Tensor::randn({2, 5}, rng);
  EXPECT_EQ(matmul(Tensor::zeros({2, 2}), b), Tensor::zeros({2, 5}));
}

TEST(Matmul, InnerMismatchIsShapeError) {
  EXPECT_THROW(matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), ShapeError);
}

// ---- softmax ----------------------------------------------------------------

TEST(Softmax, UniformInput) {
  const Tensor y = softmax(Tensor::vector({0, 0, 0, 0}), 0);
  for (double v : y.values()) EXPECT_EQ(v, 0.25);
}

TEST(Softmax, LogOddsOracle) {
  const Tensor y = softmax(Tensor::vector({std::log(1.0), std::log(3.0)}), 0);
  EXPECT_NEAR(y[0], 0.25, 1e-15);
  EXPECT_NEAR(y[1], 0.75, 1e-15);
}

TEST(Softmax, StableForLargeLogits) {
  const Tensor y = softmax(Tensor::vector({1000, 0}), 0);
  EXPECT_TRUE(y.all_finite());
  EXPECT_NEAR(y[0], 1.0, 1e-15);
  EXPECT_NEAR(y[1], 0.0, 1e-15);
}

TEST(Softmax, RowsSumToOne) {
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const Tensor x = Tensor::randn({4, 7}, rng, 10.0);
    const Tensor y = softmax(x, 1);
    for (std::size_t r = 0; r < 4; ++r) {
      double s = 0;
      for (double v : y.row(r)) {
        EXPECT_GE(v, 0.0);
        s += v;
      }
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(Softmax, EmptyAxisIsError) { EXPECT_THROW(softmax(Tensor({2, 0}, {}), 1), ShapeError); }

TEST(Softmax, AxisOutOfRangeIsError) { EXPECT_THROW(softmax(Tensor::zeros({2, 2}), 2), ShapeError); }

// ---- layer norm ---------------------------------------------------------------

TEST(LayerNorm, ConstantRowGoesToZero) {
  const Tensor y = layer_norm(Tensor::matrix({{5, 5, 5}}), Tensor::full({3}, 1), Tensor::zeros({3}), 1e-5);
  for (double v : y.values()) EXPECT_EQ(v, 0.0);
}

TEST(LayerNorm, UnitVarianceOracle) {
  const Tensor y = layer_norm(Tensor::matrix({{1, -1}}), Tensor::full({2}, 1), Tensor::zeros({2}), 1e-12);
  EXPECT_NEAR(y[0], 1.0, 1e-10);
  EXPECT_NEAR(y[1], -1.0, 1e-10);
}

TEST(LayerNorm, ZeroGainGivesBias) {
  Rng rng(5);
  const Tensor bias = Tensor::vector({0.5, -2.0, 3.0});
  const Tensor y = layer_norm(Tensor::randn({4, 3}, rng), Tensor::zeros({3}), bias, 1e-5);
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(y(r, c), bias[c]);
}

TEST(LayerNorm, NonPositiveEpsIsConfigError) {
  EXPECT_THROW(layer_norm(Tensor::zeros({1, 2}), Tensor::full({2}, 1), Tensor::zeros({2}), 0.0), ConfigError);
}

// ---- grad_check -----------------------------------------------------------------

TEST(GradCheck, LinearFunctionHasUnitGradient) {
  Rng rng(1);
  const Tensor x = Tensor::randn({3, 4}, rng);
  const ScalarFn f = [](Tape& t, Var v) { return sum(t, v); };
  const Tensor grad = tape_gradient(f, x);
  for (double g : grad.values()) EXPECT_EQ(g, 1.0);
  EXPECT_LT(grad_check(f, x), 1e-9);
}

TEST(GradCheck, ConstantFunctionHasZeroGradient) {
  Rng rng(2);
  const Tensor x = Tensor::randn({5}, rng);
  const ScalarFn f = [](Tape& t, Var) { return t.constant(Tensor::vector({3.0}).reshaped({})); };
  const Tensor grad = tape_gradient(f, x);
  for (double g : grad.values()) EXPECT_EQ(g, 0.0);
  EXPECT_LT(grad_check(f, x), 1e-9);
}

TEST(GradCheck, SoftmaxCrossEntropyOnRandomLogits) {
  Rng rng(3);
  const Tensor x = Tensor::randn({1, 8}, rng);
  const ScalarFn f = [](Tape& t, Var v) { return sum(t, cross_entropy_rows(t, v, {5})); };
  EXPECT_LT(grad_check(f, x, 1e-5), 1e-5);
}

TEST(GradCheck, StepOutsideRangeIsConfigError) {
  const ScalarFn f = [](Tape& t, Var v) { return sum(t, v); };
  EXPECT_THROW(grad_check(f, Tensor::vector({1.0}), 1e-2), ConfigError);
  EXPECT_THROW(grad_check(f, Tensor::vector({1.0}), 1e-9), ConfigError);
}

TEST(GradCheck, NonFiniteEvaluationIsValidationError) {
  const ScalarFn f = [](Tape& t, Var v) { return sum(t, scale(t, v, std::numeric_limits<double>::infinity())); };
  EXPECT_THROW(grad_check(f, Tensor::vector({1.0}), 1e-5), ValidationError);
}

// ---- gradient property over every differentiable op ---------------------------

TEST(GradProperty, Matmul) {
  check_all_seeds("matmul-left", [](Rng& r) { return rand_mat(r, 3, 4); },
                  [](Tape& t, Var x, Rng& a) { return matmul(t, x, t.constant(rand_mat(a, 4, 2))); });
  check_all_seeds("matmul-right", [](Rng& r) { return rand_mat(r, 4, 2); },
                  [](Tape& t, Var x, Rng& a) { return matmul(t, t.constant(rand_mat(a, 3, 4)), x); });
}

TEST(GradProperty, ElementwiseAndShapes) {
  auto m = [](Rng& r) { return rand_mat(r, 3, 4); };
  check_all_seeds("transpose", m, [](Tape& t, Var x, Rng&) { return transpose(t, x); });
  check_all_seeds("add", m, [](Tape& t, Var x, Rng& a) { return add(t, x, t.constant(rand_mat(a, 3, 4))); });
  check_all_seeds("mul", m, [](Tape& t, Var x, Rng& a) { return mul(t, x, t.constant(rand_mat(a, 3, 4))); });
  check_all_seeds("mul-self", m, [](Tape& t, Var x, Rng&) { return mul(t, x, x); });
  check_all_seeds("scale", m, [](Tape& t, Var x, Rng&) { return scale(t, x, -1.7); });
  check_all_seeds("gelu", m, [](Tape& t, Var x, Rng&) { return gelu(t, x); });
  check_all_seeds("reshape", m, [](Tape& t, Var x, Rng&) { return reshape(t, x, {2, 6}); });
  check_all_seeds("slice_cols", m, [](Tape& t, Var x, Rng&) { return slice_cols(t, x, 1, 2); });
  check_all_seeds("gather_rows", m, [](Tape& t, Var x, Rng&) { return gather_rows(t, x, {2, 0, 2, 1}); });
  check_all_seeds("concat_rows", m,
                  [](Tape& t, Var x, Rng& a) { return concat_rows(t, {x, t.constant(rand_mat(a, 2, 4)), x}); });
  check_all_seeds("concat_cols", m,
                  [](Tape& t, Var x, Rng& a) { return concat_cols(t, {t.constant(rand_mat(a, 3, 1)), x}); });
  check_all_seeds("sum", m, [](Tape& t, Var x, Rng&) { return sum(t, x); });
  check_all_seeds("mean", m, [](Tape& t, Var x, Rng&) { return mean(t, x); });
}

TEST(GradProperty, BiasAndScatter) {
  check_all_seeds("add_bias-x", [](Rng& r) { return rand_mat(r, 3, 4); },
                  [](Tape& t, Var x, Rng& a) { return add_bias(t, x, t.constant(Tensor::randn({4}, a))); });
  check_all_seeds("add_bias-b", [](Rng& r) { return Tensor::randn({4}, r); },
                  [](Tape& t, Var b, Rng& a) { return add_bias(t, t.constant(rand_mat(a, 3, 4)), b); });
  check_all_seeds("scatter-base", [](Rng& r) { return rand_mat(r, 5, 3); },
                  [](Tape& t, Var x, Rng& a) {
                    return scatter_add_rows(t, x, t.constant(rand_mat(a, 2, 3)), {4, 1});
                  });
  check_all_seeds("scatter-add", [](Rng& r) { return rand_mat(r, 2, 3); },
                  [](Tape& t, Var x, Rng& a) {
                    return scatter_add_rows(t, t.constant(rand_mat(a, 5, 3)), x, {0, 3});
                  });
}

TEST(GradProperty, SoftmaxEveryRankAndAxis) {
  check_all_seeds("softmax-r1", [](Rng& r) { return Tensor::randn({6}, r); },
                  [](Tape& t, Var x, Rng&) { return softmax(t, x, 0); });
  for (std::size_t axis = 0; axis < 2; ++axis) {
    check_all_seeds("softmax-r2", [](Rng& r) { return rand_mat(r, 3, 5); },
                    [axis](Tape& t, Var x, Rng&) { return softmax(t, x, axis); });
  }
  for (std::size_t axis = 0; axis < 3; ++axis) {
    check_all_seeds("softmax-r3", [](Rng& r) { return Tensor::randn({2, 3, 4}, r); },
                    [axis](Tape& t, Var x, Rng&) { return softmax(t, x, axis); });
  }
  check_all_seeds("causal_softmax", [](Rng& r) { return rand_mat(r, 4, 4); },
                  [](Tape& t, Var x, Rng&) { return causal_softmax(t, x); });
}

TEST(GradProperty, LayerNormEveryRank) {
  check_all_seeds("ln-r1", [](Rng& r) { return Tensor::randn({5}, r); },
                  [](Tape& t, Var x, Rng& a) {
                    return layer_norm(t, x, t.constant(Tensor::randn({5}, a)), t.constant(Tensor::randn({5}, a)),
                                      1e-6);
                  });
  check_all_seeds("ln-r2", [](Rng& r) { return rand_mat(r, 3, 5); },
                  [](Tape& t, Var x, Rng& a) {
                    return layer_norm(t, x, t.constant(Tensor::randn({5}, a)), t.constant(Tensor::randn({5}, a)),
                                      1e-6);
                  });
  check_all_seeds("ln-r3", [](Rng& r) { return Tensor::randn({2, 2, 5}, r); },
                  [](Tape& t, Var x, Rng& a) {
                    return layer_norm(t, x, t.constant(Tensor::randn({5}, a)), t.constant(Tensor::randn({5}, a)),
                                      1e-6);
                  });
  check_all_seeds("ln-gain", [](Rng& r) { return Tensor::randn({5}, r); },
                  [](Tape& t, Var g, Rng& a) {
                    return layer_norm(t, t.constant(rand_mat(a, 3, 5)), g, t.constant(Tensor::zeros({5})), 1e-6);
                  });
  check_all_seeds("ln-bias", [](Rng& r) { return Tensor::randn({5}, r); },
                  [](Tape& t, Var b, Rng& a) {
                    return layer_norm(t, t.constant(rand_mat(a, 3, 5)), t.constant(Tensor::randn({5}, a)), b, 1e-6);
                  });
}

TEST(GradProperty, RotationCrossEntropyWeightedSum) {
  check_all_seeds("rotate_pairs", [](Rng& r) { return rand_mat(r, 3, 6); },
                  [](Tape& t, Var x, Rng& a) {
                    const Tensor ang = Tensor::uniform({3, 3}, a, -3.0, 3.0);
                    std::vector<double> c, s;
                    for (double v : ang.values()) {
                      c.push_back(std::cos(v));
                      s.push_back(std::sin(v));
                    }
                    return rotate_pairs(t, x, Tensor({3, 3}, c), Tensor({3, 3}, s));
                  });
  check_all_seeds("cross_entropy", [](Rng& r) { return rand_mat(r, 4, 6); },
                  [](Tape& t, Var x, Rng&) { return cross_entropy_rows(t, x, {0, 5, 2, 2}); });
  check_all_seeds("weighted_sum", [](Rng& r) { return rand_mat(r, 2, 3); },
                  [](Tape& t, Var x, Rng&) {
                    return reshape(t, weighted_sum(t, x, {1, -2, 3, 0.5, 0, 7}), {1});
                  });
}

// ---- tape mechanics ---------------------------------------------------------------

TEST(Tape, SharedSubexpressionAccumulates) {
  Tape t;
  const Var x = t.leaf(Tensor::vector({3.0}));
  const Var y = add(t, mul(t, x, x), x);  // x^2 + x
  t.backward(sum(t, y));
  EXPECT_EQ(t.grad(x)[0], 7.0);
}

TEST(Tape, BackwardNeedsScalar) {
  Tape t;
  const Var x = t.leaf(Tensor::vector({1.0, 2.0}));
  EXPECT_THROW(t.backward(x), ShapeError);
}

TEST(Tape, UnreachedLeafHasZeroGradient) {
  Tape t;
  const Var x = t.leaf(Tensor::vector({1.0, 2.0}));
  const Var y = t.leaf(Tensor::vector({1.0}));
  t.backward(sum(t, y));
  EXPECT_EQ(t.grad(x), Tensor::zeros({2}));
}

TEST(Ops, DeterministicAcrossRuns) {
  auto run = [] {
    Rng rng(99);
    const Tensor a = Tensor::randn({8, 8}, rng);
    return layer_norm(gelu(matmul(a, transpose(a))), Tensor::full({8}, 1), Tensor::zeros({8}), 1e-6);
  };
  EXPECT_TRUE(bit_identical(run(), run()));
}

TEST(Ops, ScatterRejectsDuplicateOrOutOfRangePositions) {
  const Tensor base = Tensor::zeros({4, 2});
  const Tensor add = Tensor::zeros({2, 2});
  const std::vector<std::size_t> dup{1, 1};
  const std::vector<std::size_t> oob{1, 4};
  EXPECT_THROW(scatter_add_rows(base, add, dup), ValidationError);
  EXPECT_THROW(scatter_add_rows(base, add, oob), ValidationError);
}
