// Copyright 2026 The pfnbo Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// =============================================================================

#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "pfnbo/transforms.hpp"

namespace {

using pfnbo::Rng;

TEST(UnitCube, LowerBoundAndMidpoint) {
  pfnbo::UnitCubeMap m({-1.0, 2.0}, {3.0, 4.0});
  Eigen::RowVectorXd lo(2), mid(2);
  lo << -1.0, 2.0;
  mid << 1.0, 3.0;
  EXPECT_EQ(m.to_unit(lo), Eigen::RowVectorXd::Zero(2));
  EXPECT_EQ(m.to_unit(mid), Eigen::RowVectorXd::Constant(2, 0.5));
}

TEST(UnitCube, RoundTrip) {
  Rng rng(1);
  std::uniform_real_distribution<double> u(0, 1);
  pfnbo::UnitCubeMap m({-5.0, 0.001, 10.0}, {7.0, 0.002, 1e4});
  for (int i = 0; i < 10000; ++i) {
    Eigen::RowVectorXd x(3);
    for (int j = 0; j < 3; ++j) x(j) = m.lo[j] + u(rng) * (m.hi[j] - m.lo[j]);
    const auto back = m.from_unit(m.to_unit(x));
    for (int j = 0; j < 3; ++j) EXPECT_NEAR(back(j), x(j), 1e-12 * std::max(1.0, std::abs(x(j))));
  }
}

TEST(UnitCube, DegenerateDimensionPinned) {
  pfnbo::UnitCubeMap m({1.0, 0.0}, {1.0, 1.0});
  Eigen::RowVectorXd x(2);
  x << 1.0, 0.25;
  EXPECT_EQ(m.to_unit(x)(0), 0.5);
  EXPECT_EQ(m.from_unit(m.to_unit(x))(0), 1.0);
  EXPECT_EQ(m.degenerate_dims(), std::vector<std::size_t>{0});
}

TEST(YeoJohnson, InverseOnBothBranches) {
  for (double l : {-2.0, -0.5, 0.0, 0.7, 1.0, 2.0})
    for (double y : {-3.0, -0.2, 0.0, 0.4, 5.0}) EXPECT_NEAR(pfnbo::yeo_johnson_inverse(pfnbo::yeo_johnson(y, l), l), y, 1e-12);
}

TEST(YeoJohnson, LambdaOneIsAffine) {
  Eigen::VectorXd y(5);
  y << 3.0, -1.0, 2.5, 10.0, 0.0;
  const auto t = pfnbo::fit_output_transform(y, 1.0);
  const Eigen::VectorXd ty = t.apply(y);
  const double m = y.mean(), s = pfnbo::population_std(y);
  for (int i = 0; i < 5; ++i) EXPECT_NEAR(ty(i), (y(i) - m) / s, 1e-12);
}

TEST(YeoJohnson, StandardizedAndInvertible) {
  Rng rng(2);
  std::lognormal_distribution<double> ln(0.0, 1.0);
  Eigen::VectorXd y(40);
  for (auto& v : y) v = ln(rng);
  const auto t = pfnbo::fit_output_transform(y);
  const Eigen::VectorXd ty = t.apply(y);
  EXPECT_NEAR(ty.mean(), 0.0, 1e-6);
  EXPECT_NEAR(pfnbo::population_std(ty), 1.0, 1e-6);
  for (int i = 0; i < y.size(); ++i) EXPECT_NEAR(t.invert(ty(i)), y(i), 1e-9);
  EXPECT_GE(t.lambda, -2.0);
  EXPECT_LE(t.lambda, 2.0);
}

double skewness(const Eigen::VectorXd& v) {
  const double m = v.mean();
  const double s = std::sqrt((v.array() - m).square().mean());
  return (v.array() - m).cube().mean() / (s * s * s);
}

TEST(YeoJohnson, ReducesLogNormalSkew) {
  Rng rng(3);
  std::lognormal_distribution<double> ln(0.0, 0.8);
  Eigen::VectorXd y(500);
  for (auto& v : y) v = ln(rng);
  const auto t = pfnbo::fit_output_transform(y);
  EXPECT_LT(std::abs(skewness(t.apply(y))), std::abs(skewness(y)));
}

TEST(YeoJohnson, MonotoneIncreasing) {
  Rng rng(4);
  std::normal_distribution<double> g(0, 3);
  Eigen::VectorXd y(30);
  for (auto& v : y) v = g(rng);
  const auto t = pfnbo::fit_output_transform(y);
  for (double a = -10; a < 10; a += 0.37) EXPECT_LT(t.apply(a), t.apply(a + 0.1));
}

TEST(YeoJohnson, AllEqualIsShiftOnly) {
  Eigen::VectorXd y = Eigen::VectorXd::Constant(4, 2.5);
  const auto t = pfnbo::fit_output_transform(y);
  EXPECT_TRUE(t.degenerate);
  EXPECT_EQ(t.apply(3.0), 0.5);
  EXPECT_EQ(t.invert(t.apply(7.0)), 7.0);
}

TEST(GoldenSection, FindsQuadraticMaximum) {
  EXPECT_NEAR(pfnbo::golden_section_max([](double x) { return -(x - 0.3) * (x - 0.3); }, -2, 2), 0.3, 1e-5);
}

pfnbo::PfnModel tiny_model(Rng& rng, long steps) {
  pfnbo::PfnConfig cfg;
  cfg.features = 2;
  cfg.embed = 32;
  cfg.layers = 2;
  cfg.hidden = 64;
  cfg.head_hidden = 32;
  cfg.buckets = 30;
  cfg.batch_size = 16;
  cfg.shape = {2, 15, 8};
  cfg.border_batches = 20;
  cfg.optim.steps = steps;
  cfg.optim.learning_rate = 3e-3;
  pfnbo::PriorConfig p;
  p.max_dims = 1;
  return pfnbo::train_new(cfg, pfnbo::prior_source(p, cfg), rng);
}

TEST(WarpObjective, IdentityEqualsReevaluationLikelihood) {
  Rng rng(5);
  const auto m = tiny_model(rng, 1);
  const auto d = pfnbo::sample_simple_gp(8, 1, {}, rng);
  const auto dists = m.condition(d).predict(d.x);
  double ll = 0;
  for (int i = 0; i < d.n(); ++i) ll += dists[i].log_prob(d.y(i));
  EXPECT_NEAR(pfnbo::warp_objective(m, d, pfnbo::WarpParams::identity(1), {}), ll, 1e-8);
}

TEST(WarpObjective, GradientMatchesFiniteDifferences) {
  Rng rng(6);
  const auto m = tiny_model(rng, 1);
  const auto d = pfnbo::sample_simple_gp(7, 2, {}, rng);
  Eigen::VectorXd th(4);
  th << 0.3, -0.4, 0.2, 0.5;
  auto params = [](const Eigen::VectorXd& t) {
    return pfnbo::WarpParams{{std::exp(t(0)), std::exp(t(1))}, {std::exp(t(2)), std::exp(t(3))}};
  };
  Eigen::VectorXd g;
  pfnbo::warp_objective(m, d, params(th), {}, &g);
  for (int k = 0; k < 4; ++k) {
    Eigen::VectorXd tp = th, tm = th;
    tp(k) += 1e-5;
    tm(k) -= 1e-5;
    const double fd = (pfnbo::warp_objective(m, d, params(tp), {}) - pfnbo::warp_objective(m, d, params(tm), {})) / 2e-5;
    EXPECT_NEAR(g(k), fd, 1e-4 * std::max(1.0, std::abs(fd)));
  }
}

TEST(FitWarp, NeverWorseThanIdentityAndWithinBounds) {
  Rng rng(7);
  const auto m = tiny_model(rng, 200);
  pfnbo::WarpFitConfig cfg;
  cfg.restarts = 3;
  cfg.steps = 15;
  for (int t = 0; t < 3; ++t) {
    // Signal concentrated near zero: y depends on log x.
    pfnbo::Dataset d;
    d.x = pfnbo::uniform_inputs(12, 1, rng);
    d.y = d.x.col(0).unaryExpr([](double v) { return std::sin(std::log(v + 1e-4)); });
    const auto fit = pfnbo::fit_warp(m, d, rng, cfg);
    EXPECT_GE(fit.objective, fit.identity_objective);
    EXPECT_TRUE(fit.ok);
    for (double a : fit.params.a) {
      EXPECT_GE(std::log(a), cfg.min_log - 1e-12);
      EXPECT_LE(std::log(a), cfg.max_log + 1e-12);
    }
  }
}

}  // namespace
