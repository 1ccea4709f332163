/* Copyright 2026 The DCML Authors

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

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <functional>
#include <random>
#include <vector>

#include "dcml/autodiff.hpp"
#include "dcml/errors.hpp"
#include "dcml/param_set.hpp"
#include "test_util.hpp"

namespace dcml {
namespace {

using ad::Var;

Tensor row(std::initializer_list<double> v) {
  Tensor t(1, static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) t(0, i++) = x;
  return t;
}

TEST(Forward, AddElementwise) {
  const Var r = ad::add(ad::constant(row({1, 2})), ad::constant(row({3, 4})));
  EXPECT_EQ(ad::forward(r), row({4, 6}));
}

TEST(Forward, MatmulIdentity) {
  std::mt19937_64 rng(1);
  const Tensor a = testutil::random_tensor(3, 3, rng);
  const Var r = ad::matmul(ad::constant(Tensor::Identity(3, 3)), ad::constant(a));
  EXPECT_EQ(r.value(), a);
}

TEST(Forward, UniformCrossEntropyIsLog3) {
  const std::vector<int> target{0};
  const Var r = ad::softmax_cross_entropy(ad::constant(row({0, 0, 0})), target);
  EXPECT_NEAR(r.item(), std::log(3.0), 1e-15);
  EXPECT_NEAR(r.item(), 1.0986, 1e-4);
}

TEST(Forward, ShapeErrorNamesOpAndShapes) {
  try {
    ad::add(ad::constant(Tensor::Zero(2, 3)), ad::constant(Tensor::Zero(3, 2)));
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("add"), std::string::npos);
    EXPECT_NE(msg.find("[2x3]"), std::string::npos);
    EXPECT_NE(msg.find("[3x2]"), std::string::npos);
  }
  EXPECT_THROW(ad::matmul(ad::constant(Tensor::Zero(2, 3)),
                          ad::constant(Tensor::Zero(2, 3))),
               ShapeError);
}

TEST(Forward, DomainErrors) {
  EXPECT_THROW(ad::log(ad::constant(row({1, 0}))), DomainError);
  EXPECT_THROW(ad::log(ad::constant(row({-1}))), DomainError);
  EXPECT_THROW(ad::div(ad::constant(row({1})), ad::constant(row({0}))),
               DomainError);
}

TEST(Forward, L2Normalize) {
  const Var r = ad::l2_normalize_rows(ad::constant(row({3, 4})));
  EXPECT_NEAR(r.value()(0, 0), 0.6, 1e-15);
  EXPECT_NEAR(r.value()(0, 1), 0.8, 1e-15);
}

TEST(Forward, SoftmaxOfEqualLogitsIsUniform) {
  for (double tau : {0.05, 1.0, 7.0}) {
    const Var r = ad::softmax_rows(ad::constant(Tensor::Constant(2, 5, 1.3)), tau);
    EXPECT_TRUE(r.value().isApproxToConstant(0.2, 1e-15));
  }
}

TEST(Forward, NodesCacheValuesAndParentsPrecede) {
  const Var a = ad::parameter(row({1, 2}));
  const Var b = ad::tanh(a);
  const Var c = ad::sum_all(ad::mul(b, b));
  EXPECT_EQ(&ad::forward(c), &c.value());
  EXPECT_LT(a.id(), b.id());
  EXPECT_LT(b.id(), c.id());
  for (const Var& p : c.parents()) EXPECT_LT(p.id(), c.id());
}

TEST(Backward, SquareAtThree) {
  const Var x = ad::parameter(row({3}));
  const std::vector<Var> wrt{x};
  const auto g = ad::grad(ad::sum_all(ad::mul(x, x)), wrt);
  EXPECT_DOUBLE_EQ(g[0].item(), 6.0);
}

TEST(Backward, MatmulOuterProductMatchesFiniteDifferences) {
  std::mt19937_64 rng(3);
  const Tensor w = testutil::random_tensor(4, 3, rng);
  const Tensor v = testutil::random_tensor(3, 2, rng);
  const Var W = ad::parameter(w);
  const std::vector<Var> wrt{W};
  const auto g = ad::grad(ad::sum_all(ad::matmul(W, ad::constant(v))), wrt);
  const Tensor n = testutil::numeric_grad(
      [&](const Tensor& x) { return (x * v).sum(); }, w);
  EXPECT_LT(testutil::rel_err(g[0].value(), n, 1e-8), 1e-6);
  // d/dW_ij = sum_k v_jk
  for (Eigen::Index i = 0; i < 4; ++i) {
    for (Eigen::Index j = 0; j < 3; ++j) {
      EXPECT_NEAR(g[0].value()(i, j), v.row(j).sum(), 1e-14);
    }
  }
}

TEST(Backward, ConstantAndUnreachedGetZeros) {
  const Var x = ad::parameter(row({1, 2}));
  const Var unused = ad::parameter(row({5}));
  const std::vector<Var> wrt{x, unused};
  const auto g = ad::grad(ad::sum_all(ad::constant(row({4, 4}))), wrt);
  EXPECT_TRUE(g[0].value().isZero(0));
  EXPECT_TRUE(g[1].value().isZero(0));
}

TEST(Backward, NonScalarRootThrows) {
  const Var x = ad::parameter(row({1, 2}));
  const std::vector<Var> wrt{x};
  EXPECT_THROW(ad::grad(ad::mul(x, x), wrt), GraphError);
}

TEST(Backward, GatherFanOutAccumulates) {
  const Var table = ad::parameter(Tensor::Zero(3, 2));
  const std::vector<int> ids{0, 0};
  const Var picked = ad::gather_rows(table, ids);
  Tensor w(2, 2);
  w << 1, 2, 30, 40;
  const std::vector<Var> wrt{table};
  const auto g = ad::grad(ad::sum_all(ad::mul(picked, ad::constant(w))), wrt);
  EXPECT_EQ(g[0].value().row(0), row({31, 42}));
  EXPECT_TRUE(g[0].value().bottomRows(2).isZero(0));
}

TEST(Backward, FrozenEntriesGetZeroGradient) {
  ParamSet p;
  p.insert("a", row({1, 2}));
  p.insert("b", row({3, 4}), false);
  const VarSet v = to_leaves(p);
  const Var loss = ad::sum_all(ad::mul(v.at("a"), v.at("b")));
  const ParamSet g = backward_values(loss, v);
  EXPECT_TRUE(g.congruent(p));
  EXPECT_EQ(g.at("a"), row({3, 4}));
  EXPECT_TRUE(g.at("b").isZero(0));
}

TEST(Backward, IsLinear) {
  std::mt19937_64 rng(11);
  const Tensor x0 = testutil::random_tensor(3, 4, rng);
  const Var x = ad::parameter(x0);
  const Var l1 = ad::sum_all(ad::tanh(ad::mul(x, x)));
  const Var l2 = ad::mean_all(ad::exp(ad::scale(x, 0.5)));
  const double a = 0.37, b = -2.1;
  const std::vector<Var> wrt{x};
  const Tensor combined =
      ad::grad(ad::add(ad::scale(l1, a), ad::scale(l2, b)), wrt)[0].value();
  const Tensor separate = a * ad::grad(l1, wrt)[0].value() +
                          b * ad::grad(l2, wrt)[0].value();
  EXPECT_LT((combined - separate).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Backward, Deterministic) {
  std::mt19937_64 rng(5);
  const Tensor x0 = testutil::random_tensor(4, 3, rng);
  auto run = [&] {
    const Var x = ad::parameter(x0);
    const Var z = ad::l2_normalize_rows(ad::tanh(x));
    const Var loss = ad::softmax_cross_entropy(
        ad::matmul(z, ad::transpose(z)), std::vector<int>{0, 1, 2, 3});
    const std::vector<Var> wrt{x};
    return std::pair{loss.value(), ad::grad(loss, wrt)[0].value()};
  };
  const auto [f1, g1] = run();
  const auto [f2, g2] = run();
  EXPECT_EQ(std::memcmp(f1.data(), f2.data(), sizeof(double)), 0);
  EXPECT_EQ(std::memcmp(g1.data(), g2.data(), g1.size() * sizeof(double)), 0);
}

TEST(Backward, NoGradGuardProducesConstants) {
  const Var x = ad::parameter(row({2}));
  Var y;
  {
    ad::NoGradGuard guard;
    y = ad::mul(x, x);
  }
  EXPECT_FALSE(y.requires_grad());
  EXPECT_TRUE(ad::grad_enabled());
}

// Randomized oracle for each primitive, independent of the library's
// gradcheck module.
struct Prim {
  const char* name;
  std::function<Var(const Var&, const Var&)> f;
  double lo = -1, hi = 1;
};

TEST(Backward, PrimitivesMatchFiniteDifferences) {
  const std::vector<int> ids{2, 0, 2, 1};
  const std::vector<int> tgt{1, 0, 3};
  const std::vector<Prim> prims{
      {"add", [](const Var& a, const Var& b) { return ad::add(a, b); }},
      {"sub", [](const Var& a, const Var& b) { return ad::sub(a, b); }},
      {"mul", [](const Var& a, const Var& b) { return ad::mul(a, b); }},
      {"div", [](const Var& a, const Var& b) { return ad::div(a, b); }, 0.5, 2},
      {"tanh", [](const Var& a, const Var&) { return ad::tanh(a); }},
      {"relu", [](const Var& a, const Var&) { return ad::relu(a); }, 0.1, 1},
      {"exp", [](const Var& a, const Var&) { return ad::exp(a); }},
      {"log", [](const Var& a, const Var&) { return ad::log(a); }, 0.5, 2},
      {"matmul", [](const Var& a, const Var& b) { return ad::matmul(a, ad::transpose(b)); }},
      {"sum_rows", [](const Var& a, const Var&) { return ad::sum_rows(a); }},
      {"sum_cols", [](const Var& a, const Var&) { return ad::sum_cols(a); }},
      {"mean_all", [](const Var& a, const Var&) { return ad::mean_all(a); }},
      {"row_norm", [](const Var& a, const Var&) { return ad::row_norm(a); }, 0.2, 1},
      {"div_col", [](const Var& a, const Var& b) { return ad::div_col(a, ad::row_norm(b)); }, 0.2, 1},
      {"l2_normalize_rows", [](const Var& a, const Var&) { return ad::l2_normalize_rows(a); }, 0.2, 1},
      {"log_softmax_rows", [](const Var& a, const Var&) { return ad::log_softmax_rows(a, 0.3); }},
      {"softmax_rows", [](const Var& a, const Var&) { return ad::softmax_rows(a, 2.0); }},
      {"softmax_cross_entropy", [tgt](const Var& a, const Var&) { return ad::softmax_cross_entropy(a, tgt); }},
      {"squared_difference", [](const Var& a, const Var& b) { return ad::squared_difference(a, b); }},
      {"gather_rows", [ids](const Var& a, const Var&) { return ad::gather_rows(a, ids); }},
      {"broadcast_add", [](const Var& a, const Var& b) { return ad::add(a, ad::sum_rows(b)); }},
  };
  std::mt19937_64 rng(2024);
  for (const Prim& p : prims) {
    double worst = 0;
    for (int trial = 0; trial < 100; ++trial) {
      const Tensor a0 = testutil::random_tensor(3, 4, rng, p.lo, p.hi);
      const Tensor b0 = testutil::random_tensor(3, 4, rng, p.lo, p.hi);
      const Var a = ad::parameter(a0);
      const Var b = ad::parameter(b0);
      const Var out = p.f(a, b);
      const Tensor w = testutil::random_tensor(out.rows(), out.cols(), rng);
      const std::vector<Var> wrt{a, b};
      const auto g = ad::grad(ad::sum_all(ad::mul(out, ad::constant(w))), wrt);
      auto value = [&](const Tensor& x, const Tensor& y) {
        return p.f(ad::constant(x), ad::constant(y)).value().cwiseProduct(w).sum();
      };
      const Tensor na = testutil::numeric_grad(
          [&](const Tensor& x) { return value(x, b0); }, a0);
      const Tensor nb = testutil::numeric_grad(
          [&](const Tensor& y) { return value(a0, y); }, b0);
      worst = std::max({worst, testutil::rel_err(g[0].value(), na),
                        testutil::rel_err(g[1].value(), nb)});
    }
    EXPECT_LT(worst, 1e-4) << p.name;
  }
}

TEST(SgdStep, HandValues) {
  VarSet params;
  params.insert("w", ad::parameter(row({1.0})));
  VarSet grads;
  grads.insert("w", ad::constant(row({2.0})));
  const VarSet next = differentiable_sgd_step(params, grads, 0.5);
  EXPECT_DOUBLE_EQ(next.at("w").item(), 0.0);
}

TEST(SgdStep, Errors) {
  VarSet params;
  params.insert("w", ad::parameter(row({1.0})));
  VarSet grads;
  grads.insert("w", ad::constant(row({2.0})));
  EXPECT_THROW(differentiable_sgd_step(params, grads, -0.1), ConfigError);
  EXPECT_THROW(differentiable_sgd_step(params, grads, std::nan("")), ConfigError);
  VarSet other;
  other.insert("v", ad::constant(row({2.0})));
  EXPECT_THROW(differentiable_sgd_step(params, other, 0.1), std::exception);
}

// Inner loss c/2 theta^2, outer loss L(theta') = sin(theta') + theta'^3.
// Unrolled: dL/dtheta = (1 - lr c) L'(theta').
TEST(SgdStep, SecondOrderQuadraticClosedForm) {
  for (double c : {0.5, 1.0, 3.0}) {
    const double theta0 = 0.7, lr = 0.2;
    VarSet params;
    params.insert("w", ad::parameter(row({theta0})));
    const Var inner = ad::scale(ad::mul(params.at("w"), params.at("w")), c / 2);
    const VarSet g = backward(ad::sum_all(inner), params, true);
    const VarSet next = differentiable_sgd_step(params, g, lr, GradientOrder::kSecond);
    const Var tp = next.at("w");
    const Var outer = ad::sum_all(ad::add(ad::tanh(tp), ad::mul(tp, ad::mul(tp, tp))));
    const double analytic = backward_values(outer, params).at("w")(0, 0);
    const double t1 = theta0 * (1 - lr * c);
    const double closed =
        (1 - lr * c) * ((1 - std::tanh(t1) * std::tanh(t1)) + 3 * t1 * t1);
    EXPECT_NEAR(analytic, closed, 1e-14);
    auto f = [&](double th) {
      const double t = th - lr * c * th;
      return std::tanh(t) + t * t * t;
    };
    const double h = 1e-5;
    const double numeric = (f(theta0 + h) - f(theta0 - h)) / (2 * h);
    EXPECT_LT(std::abs(analytic - numeric) / std::abs(numeric), 1e-6);

    // First order drops the (1 - lr c) factor.
    const VarSet fo = differentiable_sgd_step(params, g, lr, GradientOrder::kFirst);
    const Var tf = fo.at("w");
    const Var outer_fo = ad::sum_all(ad::add(ad::tanh(tf), ad::mul(tf, ad::mul(tf, tf))));
    EXPECT_NEAR(backward_values(outer_fo, params).at("w")(0, 0), closed / (1 - lr * c),
                1e-14);
  }
}

TEST(SgdStep, ZeroLrIsIdentityAndPlainGradient) {
  VarSet params;
  params.insert("w", ad::parameter(row({1.5, -0.5})));
  const Var inner = ad::sum_all(ad::exp(params.at("w")));
  const VarSet g = backward(inner, params, true);
  const VarSet next = differentiable_sgd_step(params, g, 0.0, GradientOrder::kSecond);
  EXPECT_EQ(next.at("w").value(), params.at("w").value());
  const Var outer = ad::sum_all(ad::mul(next.at("w"), next.at("w")));
  EXPECT_EQ(backward_values(outer, params).at("w"), row({3.0, -1.0}));
}

TEST(ParamSetTest, InsertionOrderAndUniqueness) {
  ParamSet p;
  p.insert("z", row({1}));
  p.insert("a", row({2, 3}));
  EXPECT_EQ(p[0].name, "z");
  EXPECT_EQ(p[1].name, "a");
  EXPECT_EQ(p.num_scalars(), 3u);
  EXPECT_THROW(p.insert("z", row({0})), ConfigError);
  ParamSet q;
  q.insert("a", row({2, 3}));
  q.insert("z", row({1}));
  EXPECT_FALSE(p.congruent(q));
  EXPECT_TRUE(p.congruent(p.zeros_like()));
  ParamSet r = p.zeros_like();
  r.assign_flat(p.flatten());
  EXPECT_TRUE(r.identical(p));
}

}  // namespace
}  // namespace dcml
