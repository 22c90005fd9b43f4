/* Copyright 2026 The mmdnet Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#include <cmath>
#include <limits>
#include <vector>

#include <gtest/gtest.h>

#include "mmdnet/autodiff.hpp"
#include "mmdnet/errors.hpp"
#include "mmdnet/gradcheck.hpp"
#include "mmdnet/losses.hpp"
#include "mmdnet/ops.hpp"
#include "mmdnet/tensor.hpp"
#include "mmdnet/testing/suites.hpp"

namespace mmdnet {
namespace {

using G = Graph<double>;
using V = Var<double>;
using TD = Tensor<double>;

std::vector<double> values(V v) { return {v.value().data().begin(), v.value().data().end()}; }
std::vector<double> grads(V v) { return {v.grad().begin(), v.grad().end()}; }

TEST(TensorFrom, StoresValues) {
  const TD t = tensor_from<double>({2, 2}, {1, 2, 3, 4});
  EXPECT_EQ(t.shape(), (Shape{2, 2}));
  EXPECT_EQ(t.storage(), (std::vector<double>{1, 2, 3, 4}));
  EXPECT_EQ(tensor_from<double>({3}, {0, 0, 0}).storage(), std::vector<double>(3, 0.0));
}

TEST(TensorFrom, RejectsBadInput) {
  EXPECT_THROW(tensor_from<double>({2}, {1, 2, 3}), ShapeError);
  EXPECT_THROW(tensor_from<double>({0, 2}, {}), ShapeError);
  EXPECT_THROW(tensor_from<double>({2}, {1, std::numeric_limits<double>::quiet_NaN()}), NumericError);
  EXPECT_THROW(tensor_from<float>({1}, {std::numeric_limits<float>::infinity()}), NumericError);
}

TEST(AllFinite, CatchesEveryNonFiniteKind) {
  std::vector<float> f(37, 1.0f);
  EXPECT_TRUE(all_finite<float>(f));
  f[20] = -std::numeric_limits<float>::infinity();
  EXPECT_FALSE(all_finite<float>(f));
  std::vector<double> d{0.0, -0.0, std::numeric_limits<double>::denorm_min(), std::numeric_limits<double>::max()};
  EXPECT_TRUE(all_finite<double>(d));
  d.push_back(std::numeric_limits<double>::quiet_NaN());
  EXPECT_FALSE(all_finite<double>(d));
}

TEST(Elementwise, ForwardValues) {
  G g;
  const V a = g.constant(tensor_from<double>({3}, {-1, 0, 2}));
  EXPECT_EQ(values(relu(a)), (std::vector<double>{0, 0, 2}));
  const V x = g.constant(tensor_from<double>({2}, {1, 2}));
  const V y = g.constant(tensor_from<double>({2}, {3, 4}));
  EXPECT_EQ(values(add(x, y)), (std::vector<double>{4, 6}));
  EXPECT_EQ(values(sub(x, y)), (std::vector<double>{-2, -2}));
  EXPECT_EQ(values(mul(x, y)), (std::vector<double>{3, 8}));
  EXPECT_EQ(values(scale(x, 2.5)), (std::vector<double>{2.5, 5}));
  EXPECT_EQ(values(elementwise<double>(Elementwise::add, x, y)), (std::vector<double>{4, 6}));
  EXPECT_DOUBLE_EQ(values(exp(x))[1], std::exp(2.0));
  EXPECT_DOUBLE_EQ(values(log(y))[0], std::log(3.0));
}

TEST(Elementwise, ShapeMismatchAndMissingOperand) {
  G g;
  const V x = g.constant(TD::zeros({2}));
  const V y = g.constant(TD::zeros({3}));
  EXPECT_THROW(add(x, y), ShapeError);
  EXPECT_THROW(mul(x, g.constant(TD::zeros({2, 1}))), ShapeError);
  EXPECT_THROW(elementwise<double>(Elementwise::sub, x), ShapeError);
}

TEST(Elementwise, LogClampsAtEpsilon) {
  G g;
  const V p = g.variable(tensor_from<double>({2}, {0.0, 1.0}));
  const V l = log(p);
  EXPECT_DOUBLE_EQ(values(l)[0], std::log(kLogEpsilon));
  g.backward(sum(l));
  EXPECT_EQ(grads(p)[0], 0.0);  // below the clamp nothing flows back
  EXPECT_DOUBLE_EQ(grads(p)[1], 1.0);
}

TEST(Elementwise, ReluGradientAndSubgradientAtZero) {
  G g;
  const V x = g.variable(tensor_from<double>({3}, {-1, 0, 2}));
  g.backward(sum(relu(x)));
  EXPECT_EQ(grads(x), (std::vector<double>{0, 0, 1}));
  const double err = grad_check([](G&, V v) { return sum(relu(v)); }, tensor_from<double>({2}, {-1, 2}));
  EXPECT_LT(err, 1e-6);
}

TEST(Matmul, HandValues) {
  G g;
  const V i2 = g.constant(tensor_from<double>({2, 2}, {1, 0, 0, 1}));
  const V m = g.constant(tensor_from<double>({2, 2}, {1, 2, 3, 4}));
  EXPECT_EQ(values(matmul(i2, m)), (std::vector<double>{1, 2, 3, 4}));
  const V r = matmul(g.constant(tensor_from<double>({1, 2}, {1, 2})), g.constant(tensor_from<double>({2, 1}, {3, 4})));
  EXPECT_EQ(r.shape(), (Shape{1, 1}));
  EXPECT_EQ(values(r)[0], 11.0);
  EXPECT_THROW(matmul(m, g.constant(TD::zeros({3, 2}))), ShapeError);
  EXPECT_THROW(matmul(g.constant(TD::zeros({2})), m), ShapeError);
}

TEST(Matmul, RandomGradcheck) {
  Rng rng(7);
  const double err = grad_check([](G&, std::span<const V> v) { return sum(matmul(v[0], v[1])); },
                                {testing::random_tensor({4, 5}, rng), testing::random_tensor({5, 3}, rng)});
  EXPECT_LT(err, 1e-6);
}

TEST(Backward, LinearAndSquare) {
  G g;
  const V x = g.variable(TD::filled({2, 3}, 4.0));
  g.backward(sum(x));
  EXPECT_EQ(grads(x), std::vector<double>(6, 1.0));

  G h;
  const V y = h.variable(tensor_from<double>({3}, {1, 2, 3}));
  h.backward(sum(mul(y, y)));
  EXPECT_EQ(grads(y), (std::vector<double>{2, 4, 6}));
}

TEST(Backward, AcceptsRankZeroAndRejectsNonScalar) {
  G g;
  const V x = g.variable(tensor_from<double>({}, {3.0}));
  EXPECT_NO_THROW(g.backward(scale(x, 2.0)));
  EXPECT_EQ(grads(x), (std::vector<double>{2.0}));
  G h;
  const V y = h.variable(TD::zeros({2}));
  EXPECT_THROW(h.backward(y), ShapeError);
}

TEST(Backward, EmptyGraphAndForeignLoss) {
  G empty;
  G other;
  const V x = other.variable(TD::zeros({1}));
  EXPECT_THROW(empty.backward(V{}), Error);
  G g;
  g.constant(TD::zeros({1}));
  EXPECT_THROW(g.backward(x), Error);
}

TEST(Backward, AccumulatesAcrossBranches) {
  Rng rng(3);
  const TD x0 = testing::random_tensor({2, 3}, rng);
  const TD w = testing::random_tensor({2, 3}, rng);
  auto branch_g = [&](V x) { return sum(mul(exp(x), x.graph().constant(w))); };
  auto branch_h = [&](V x) { return sum(mul(x, x)); };

  G both;
  const V xb = both.variable(x0);
  both.backward(add(branch_g(xb), branch_h(xb)));
  G only_g;
  const V xg = only_g.variable(x0);
  only_g.backward(branch_g(xg));
  G only_h;
  const V xh = only_h.variable(x0);
  only_h.backward(branch_h(xh));
  for (std::size_t i = 0; i < x0.size(); ++i) EXPECT_NEAR(xb.grad()[i], xg.grad()[i] + xh.grad()[i], 1e-14);
}

TEST(Backward, ParameterBoundTwiceAccumulates) {
  Parameter<double> p{"w", tensor_from<double>({2}, {1.0, -2.0}), {}};
  G g;
  const V a = g.parameter(p);
  const V b = g.parameter(p);
  g.backward(sum(add(mul(a, a), b)));
  EXPECT_EQ(p.grad, (std::vector<double>{3.0, -3.0}));
  // a second backward starts from zero rather than stacking on the first
  G h;
  const V c = h.parameter(p);
  h.backward(sum(c));
  EXPECT_EQ(p.grad, (std::vector<double>{1.0, 1.0}));
}

TEST(Backward, FrozenParameterGetsNoGradient) {
  Parameter<double> p{"w", tensor_from<double>({1}, {2.0}), {}};
  G g;
  const V x = g.variable(tensor_from<double>({1}, {3.0}));
  g.backward(sum(mul(g.parameter(p, false), x)));
  EXPECT_TRUE(p.grad.empty() || p.grad[0] == 0.0);
  EXPECT_EQ(grads(x)[0], 2.0);
}

TEST(Graph, InputsPrecedeNodes) {
  G g;
  const V x = g.variable(TD::filled({2}, 1.0));
  const V y = relu(add(x, scale(x, 3.0)));
  sum(y);
  for (std::size_t id = 0; id < g.size(); ++id)
    for (std::size_t in : g.inputs(id)) EXPECT_LT(in, id);
}

TEST(NonFinite, ForwardNamesOp) {
  G g;
  const V x = g.constant(tensor_from<double>({1}, {1000.0}));
  try {
    exp(x);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("exp"), std::string::npos) << e.what();
  }
}

TEST(NonFinite, BackwardNamesOp) {
  G g;
  const V x = g.variable(tensor_from<double>({1}, {1.0}));
  const V y = g.record("blowup", x.value(), {x}, [x](G& gg, std::size_t, std::span<const double>) {
    gg.accumulator(x.id())[0] += std::numeric_limits<double>::infinity();
  });
  try {
    g.backward(sum(y));
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("blowup"), std::string::npos) << e.what();
  }
}

TEST(Purity, RepeatedForwardIsBitIdentical) {
  Rng rng(11);
  const TD a = testing::random_tensor({3, 4}, rng), b = testing::random_tensor({4, 2}, rng);
  auto run = [&] {
    G g;
    return values(softmax(matmul(g.constant(a), g.constant(b))));
  };
  EXPECT_EQ(run(), run());
}

TEST(GradCheck, ExactOnLinear) {
  Rng rng(5);
  EXPECT_LT(grad_check([](G&, V x) { return sum(x); }, testing::random_tensor({3, 3}, rng)), 1e-10);
}

TEST(GradCheck, CrossEntropyOverSoftmax) {
  Rng rng(2);
  const TD y = testing::random_one_hot(4, 3, rng);
  const double err = grad_check([&](G&, V x) { return categorical_cross_entropy(softmax(x), y); },
                                testing::random_tensor({4, 3}, rng, -2, 2));
  EXPECT_LT(err, 1e-6);
}

TEST(GradCheck, ReportsDiscrepancy) {
  // a deliberately wrong backward is reported, not hidden
  auto wrong = [](G& g, V x) {
    return g.record("wrong", x.value(), {x}, [x](G& gg, std::size_t, std::span<const double> gr) {
      auto acc = gg.accumulator(x.id());
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += 2.0 * gr[i];
    });
  };
  const double err = grad_check([&](G& g, V x) { return sum(wrong(g, x)); }, TD::filled({2}, 1.0));
  EXPECT_GT(err, 0.4);
}

TEST(GradCheck, RandomizedSuiteAllOps) {
  for (const auto& o : testing::gradient_suite(20)) {
    EXPECT_LT(o.worst, 1e-4) << o.name;
    EXPECT_EQ(o.cases, 20u);
  }
}

}  // namespace
}  // namespace mmdnet
