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
#include <memory>
#include <random>

#include <gtest/gtest.h>

#include "pfnbo/kg.hpp"
#include "support/small_model.hpp"

namespace {

using pfnbo::Rng;

std::shared_ptr<const pfnbo::BucketLayout> layout_from(std::vector<double> borders) {
  return std::make_shared<const pfnbo::BucketLayout>(pfnbo::BucketLayout::from_borders(std::move(borders)));
}

std::vector<double> random_probs(std::size_t k, Rng& rng) {
  std::gamma_distribution<double> g(0.5, 1.0);
  std::vector<double> p(k);
  double s = 0;
  for (auto& v : p) s += (v = g(rng) + 1e-12);
  for (auto& v : p) v /= s;
  return p;
}

pfnbo::PfnConfig kg_config() {
  auto cfg = pfnbo::testing::small_config();
  cfg.style = pfnbo::StyleVocabulary::Kg;
  cfg.shape = {1, 6, 4};
  cfg.batch_size = 4;
  return cfg;
}

pfnbo::PriorConfig one_dim_prior() {
  pfnbo::PriorConfig p;
  p.min_dims = 1;
  p.max_dims = 1;
  return p;
}

pfnbo::gp::GpPosterior toy_gp(int n, int d, double noise, Rng& rng) {
  pfnbo::gp::KernelParams p;
  p.noise = noise;
  const Eigen::MatrixXd x = pfnbo::uniform_inputs(n, d, rng);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) y(i) = std::sin(7.0 * x(i, 0));
  return pfnbo::gp::GpPosterior(p, x, y);
}

TEST(Tau, OneBucketMassStaysInsideIt) {
  const auto L = layout_from({0.0, 1.0, 1.001, 2.0});
  std::vector<double> p(5, 0.0);
  p[2] = 1.0;
  const double t = pfnbo::tau_of(pfnbo::RiemannDistribution(L, p));
  EXPECT_GE(t, 1.0);
  EXPECT_LE(t, 1.001);
}

TEST(Tau, ShiftEquivariant) {
  Rng rng(1);
  std::vector<double> b{-1.0, -0.2, 0.1, 0.4, 1.3};
  for (int i = 0; i < 50; ++i) {
    const auto p = random_probs(b.size() + 1, rng);
    const double delta = std::uniform_real_distribution<double>(-3.0, 3.0)(rng);
    std::vector<double> shifted = b;
    for (auto& v : shifted) v += delta;
    const double t0 = pfnbo::tau_of(pfnbo::RiemannDistribution(layout_from(b), p));
    const double t1 = pfnbo::tau_of(pfnbo::RiemannDistribution(layout_from(shifted), p));
    EXPECT_NEAR(t1, t0 + delta, 1e-9);
  }
}

TEST(Tau, AtLeastTheMedian) {
  Rng rng(2);
  std::vector<double> b{-2.0, -1.0, -0.5, 0.0, 0.3, 0.9, 2.5};
  const auto L = layout_from(b);
  for (int i = 0; i < 100; ++i) {
    const pfnbo::RiemannDistribution d(L, random_probs(b.size() + 1, rng));
    EXPECT_GE(pfnbo::tau_of(d), d.icdf(0.5));
  }
}

TEST(Tau, NeedsKgVocabulary) {
  Rng rng(3);
  const auto m = pfnbo::testing::random_model(pfnbo::testing::small_config(), rng);
  const auto d = pfnbo::sample_simple_gp(4, 1, {}, rng);
  EXPECT_THROW(pfnbo::tau(m, d.x, d.y), pfnbo::ConfigError);
}

TEST(MeanStage, TargetsAreBaseMeans) {
  Rng rng(4);
  const auto cfg = kg_config();
  const auto m = pfnbo::testing::random_model(cfg, rng);
  pfnbo::TrainingEpisode e;
  const auto d = pfnbo::sample_simple_gp(9, 2, {}, rng);
  e.train_x = d.x.topRows(5);
  e.train_y = d.y.head(5);
  e.query_x = d.x.bottomRows(4);
  e.target = d.y.tail(4);
  pfnbo::detail::to_mean_episode(m, e, rng);
  EXPECT_EQ(e.style.mode, pfnbo::StyleMode::Mean);
  const auto preds = m.condition(e.train_x, e.train_y).predict(e.query_x);
  for (int i = 0; i < 4; ++i) EXPECT_EQ(e.target(i), preds[static_cast<std::size_t>(i)].mean());
}

TEST(KgStage, TargetsAreTauOfAugmentedData) {
  Rng rng(5);
  const auto m = pfnbo::testing::random_model(kg_config(), rng);
  const auto d = pfnbo::sample_simple_gp(7, 1, {}, rng);
  pfnbo::TrainingEpisode e{d.x.topRows(5), d.y.head(5), d.x.bottomRows(2), d.y.tail(2), {}};
  pfnbo::detail::to_kg_episode(m, e);
  for (int i = 0; i < 2; ++i) {
    Eigen::MatrixXd x(6, 1);
    Eigen::VectorXd y(6);
    x << d.x.topRows(5), d.x.row(5 + i);
    y << d.y.head(5), d.y(5 + i);
    EXPECT_EQ(e.target(i), pfnbo::tau(m, x, y));
  }
}

TEST(KgStage, TargetsReproducible) {
  Rng init(6);
  const auto cfg = kg_config();
  auto m = std::make_shared<const pfnbo::PfnModel>(pfnbo::testing::random_model(cfg, init));
  const auto src = pfnbo::kg_head_source(pfnbo::prior_source(one_dim_prior(), cfg), m, 0.2, 0.2);
  Rng a(7), b(7);
  const auto da = src(a), db = src(b);
  ASSERT_EQ(da.episodes.size(), db.episodes.size());
  for (std::size_t i = 0; i < da.episodes.size(); ++i) {
    EXPECT_EQ(da.episodes[i].target, db.episodes[i].target);
    EXPECT_EQ(da.episodes[i].style.mode, db.episodes[i].style.mode);
  }
}

TEST(KgStage, TrainingRunsAndModesDiffer) {
  Rng rng(8);
  const auto cfg = kg_config();
  auto m = pfnbo::testing::random_model(cfg, rng);
  const auto base = pfnbo::prior_source(one_dim_prior(), cfg);
  pfnbo::KgStageConfig stage;
  stage.optim.steps = 5;
  const auto r1 = pfnbo::train_mean_head(m, base, stage, rng);
  const auto r2 = pfnbo::train_kg_head(m, base, stage, rng);
  for (double l : r1.losses) EXPECT_TRUE(std::isfinite(l));
  for (double l : r2.losses) EXPECT_TRUE(std::isfinite(l));
  const auto d = pfnbo::sample_simple_gp(5, 1, {}, rng);
  const Eigen::MatrixXd q = pfnbo::uniform_inputs(3, 1, rng);
  const auto plain = m.condition(d, {}).logits(q);
  const auto kg = m.condition(d, {pfnbo::StyleMode::Kg, std::nullopt}).logits(q);
  EXPECT_GT((plain - kg).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(pfnbo::learned_kg(m, d.x, d.y, q).size(), 3u);
}

TEST(McKg, SeededSingleDrawIsDeterministic) {
  Rng r(9);
  const auto post = toy_gp(5, 1, 1e-4, r);
  const Eigen::RowVectorXd x = Eigen::RowVectorXd::Constant(1, 0.37);
  Rng a(10), b(10);
  EXPECT_EQ(pfnbo::mc_kg_oracle(post, x, 1, 1, a).value, pfnbo::mc_kg_oracle(post, x, 1, 1, b).value);
}

TEST(McKg, MatchesRefitPosterior) {
  Rng r(11);
  const auto post = toy_gp(6, 2, 1e-3, r);
  const Eigen::RowVectorXd x = pfnbo::uniform_inputs(1, 2, r).row(0);
  const int N = 20, M = 30;
  Rng a(12);
  Rng b = a;
  const auto est = pfnbo::mc_kg_oracle(post, x, N, M, a);

  // Replay the same candidate and outcome draws through full refits.
  Eigen::MatrixXd cand(M + 7, 2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < M; ++i)
    for (int j = 0; j < 2; ++j) cand(i, j) = u(b);
  cand.middleRows(M, 6) = post.inputs();
  cand.row(M + 6) = x;
  auto max_mean = [&](const pfnbo::gp::GpPosterior& p) {
    double best = -INFINITY;
    for (Eigen::Index i = 0; i < cand.rows(); ++i) best = std::max(best, p.predict(cand.row(i)).first);
    return best;
  };
  const double before = max_mean(post);
  const auto [m, v] = post.predict_observation(x);
  std::normal_distribution<double> z(0.0, 1.0);
  double total = 0;
  for (int k = 0; k < N; ++k) {
    const double y = m + std::sqrt(v) * z(b);
    Eigen::MatrixXd xa(7, 2);
    Eigen::VectorXd ya(7);
    xa << post.inputs(), x;
    ya << post.outputs(), y;
    total += max_mean(pfnbo::gp::GpPosterior(post.params(), xa, ya)) - before;
  }
  EXPECT_NEAR(est.value, total / N, 1e-7);
}

TEST(McKg, NonnegativeWithinMcError) {
  Rng r(13);
  const auto post = toy_gp(5, 1, 1e-4, r);
  for (int i = 0; i < 10; ++i) {
    const Eigen::RowVectorXd x = pfnbo::uniform_inputs(1, 1, r).row(0);
    const auto e = pfnbo::mc_kg_oracle(post, x, 500, 50, r);
    EXPECT_GE(e.value, -3.0 * e.standard_error);
  }
}

TEST(McKg, ZeroAtNoiseFreeObservation) {
  Rng r(14);
  const auto post = toy_gp(5, 1, 1e-10, r);
  const Eigen::RowVectorXd x = post.inputs().row(2);
  const auto e = pfnbo::mc_kg_oracle(post, x, 200, 50, r);
  EXPECT_NEAR(e.value, 0.0, 1e-4);
}

TEST(McKg, StandardErrorScalesWithOutcomes) {
  // Quadrupling the outcome count halves the standard error.
  Rng r(15);
  const auto post = toy_gp(4, 1, 1e-4, r);
  const Eigen::RowVectorXd x = Eigen::RowVectorXd::Constant(1, 0.8);
  Rng a(16), b(17);
  const double s1 = pfnbo::mc_kg_oracle(post, x, 4000, 40, a).standard_error;
  const double s4 = pfnbo::mc_kg_oracle(post, x, 16000, 40, b).standard_error;
  EXPECT_NEAR(s4 / s1, 0.5, 0.1);
}

TEST(EiKgPolicy, FairCoin) {
  Rng rng(18);
  const pfnbo::EiKgPolicy p;
  const int n = 20000;
  int kg = 0;
  for (int i = 0; i < n; ++i) kg += p.use_kg(rng);
  EXPECT_NEAR(static_cast<double>(kg) / n, 0.5, 3.0 * std::sqrt(0.25 / n));
}

TEST(EiKgPolicy, ReproducibleAndConfigurable) {
  Rng a(19), b(19);
  const pfnbo::EiKgPolicy p;
  for (int i = 0; i < 100; ++i) EXPECT_EQ(p.use_kg(a), p.use_kg(b));
  const pfnbo::EiKgPolicy always{1.0};
  for (int i = 0; i < 100; ++i) EXPECT_TRUE(always.use_kg(a));
  EXPECT_THROW(pfnbo::EiKgPolicy{1.5}.use_kg(a), pfnbo::ConfigError);
}

}  // namespace
