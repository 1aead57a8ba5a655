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
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "pfnbo/pfn.hpp"
#include "support/small_model.hpp"

namespace {

using pfnbo::Rng;

using pfnbo::testing::random_model;
using pfnbo::testing::small_config;
using pfnbo::testing::small_prior;

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("pfnbo_" + name)).string();
}

TEST(PfnModel, UntrainedOutputsAreNormalized) {
  Rng rng(1);
  const auto m = random_model(small_config(), rng);
  const auto d = pfnbo::sample_simple_gp(5, 2, {}, rng);
  const auto q = pfnbo::uniform_inputs(7, 2, rng);
  for (const auto& dist : m.forward(d, q)) {
    double s = 0;
    for (double p : dist.probs()) s += p;
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(PfnModel, TrainPermutationInvariance) {
  Rng rng(2);
  const auto m = random_model(small_config(), rng);
  const auto d = pfnbo::sample_simple_gp(9, 3, {}, rng);
  const auto q = pfnbo::uniform_inputs(4, 3, rng);
  pfnbo::Dataset shuffled = d;
  std::vector<int> perm(9);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  for (int i = 0; i < 9; ++i) {
    shuffled.x.row(i) = d.x.row(perm[i]);
    shuffled.y(i) = d.y(perm[i]);
  }
  EXPECT_EQ(m.condition(d).logits(q), m.condition(shuffled).logits(q));
}

TEST(PfnModel, QueriesAreIndependent) {
  Rng rng(3);
  const auto m = random_model(small_config(), rng);
  const auto d = pfnbo::sample_simple_gp(6, 2, {}, rng);
  const auto q = pfnbo::uniform_inputs(5, 2, rng);
  const auto c = m.condition(d);
  const auto all = c.logits(q);
  for (int i = 0; i < 5; ++i) EXPECT_EQ(Eigen::MatrixXd(all.row(i)), c.logits(q.row(i)));
}

TEST(PfnModel, CapacityError) {
  Rng rng(4);
  const auto m = random_model(small_config(), rng);
  const auto d = pfnbo::sample_simple_gp(3, 5, {}, rng);
  EXPECT_THROW(m.condition(d), pfnbo::CapacityError);
}

TEST(PfnModel, StyleRejectedWithoutVocabulary) {
  Rng rng(5);
  const auto m = random_model(small_config(), rng);
  const auto d = pfnbo::sample_simple_gp(3, 1, {}, rng);
  pfnbo::StyleInput s;
  s.mode = pfnbo::StyleMode::Kg;
  EXPECT_THROW(m.condition(d, s), pfnbo::ConfigError);
}

TEST(Loss, UniformLogitsGiveLogClasses) {
  // With all logits equal every class has mass 1/C; the bucket-level part of
  // the loss is log C and the density factor adds -log(1/width).
  pfnbo::BucketLayout L = pfnbo::BucketLayout::from_borders({0.0, 1.0, 3.0});
  pfnbo::EpisodeData data;
  pfnbo::TrainingEpisode e;
  e.train_x = Eigen::MatrixXd::Zero(1, 1);
  e.train_y = Eigen::VectorXd::Zero(1);
  e.query_x = Eigen::MatrixXd::Zero(2, 1);
  e.target = Eigen::VectorXd(2);
  e.target << 0.5, 2.0;
  data.episodes.push_back(e);
  pfnbo::nn::Mat<double> logits = pfnbo::nn::Mat<double>::Zero(2, 4);
  const double loss = pfnbo::detail::target_loss(L, data, logits, static_cast<pfnbo::nn::Mat<double>*>(nullptr));
  EXPECT_NEAR(loss, std::log(4.0) + 0.5 * (std::log(1.0) + std::log(2.0)), 1e-12);
}

TEST(Loss, BatchLossIsMeanOfPointLosses) {
  Rng rng(6);
  auto cfg = small_config();
  const auto m = random_model(cfg, rng);
  const auto src = pfnbo::prior_source(small_prior(), cfg);
  const auto batch = src(rng);
  double total = 0;
  int count = 0;
  for (const auto& e : batch.episodes) {
    const auto c = m.condition(e.train_x, e.train_y);
    const auto dists = c.predict(e.query_x);
    for (int i = 0; i < e.target.size(); ++i, ++count) total -= dists[i].log_prob(e.target(i));
  }
  EXPECT_NEAR(m.loss(batch), total / count, 1e-9);
}

TEST(Loss, DlogitsMatchFiniteDifferences) {
  pfnbo::BucketLayout L = pfnbo::BucketLayout::from_borders({-1.0, 0.0, 0.5, 2.0});
  pfnbo::EpisodeData data;
  pfnbo::TrainingEpisode e;
  e.train_x = Eigen::MatrixXd::Zero(1, 1);
  e.train_y = Eigen::VectorXd::Zero(1);
  e.query_x = Eigen::MatrixXd::Zero(3, 1);
  e.target = Eigen::VectorXd(3);
  e.target << -3.0, 0.2, 5.0;
  data.episodes.push_back(e);
  pfnbo::nn::Mat<double> logits = pfnbo::nn::Mat<double>::Random(3, 5), dl;
  pfnbo::detail::target_loss(L, data, logits, &dl);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 5; ++c) {
      auto lp = logits, lm = logits;
      lp(r, c) += 1e-6;
      lm(r, c) -= 1e-6;
      const double fd = (pfnbo::detail::target_loss(L, data, lp, static_cast<pfnbo::nn::Mat<double>*>(nullptr)) -
                         pfnbo::detail::target_loss(L, data, lm, static_cast<pfnbo::nn::Mat<double>*>(nullptr))) / 2e-6;
      EXPECT_NEAR(dl(r, c), fd, 1e-7);
    }
}

TEST(GradQuery, ConstantFunctionalHasZeroGradient) {
  Rng rng(7);
  const auto m = random_model(small_config(), rng);
  const auto d = pfnbo::sample_simple_gp(4, 2, {}, rng);
  Eigen::RowVectorXd g;
  const auto c = m.condition(d);
  pfnbo::Conditioned::Functional constant = [](const pfnbo::RiemannDistribution&, std::vector<double>* dp) {
    if (dp) dp->assign(22, 0.0);
    return 3.0;
  };
  Eigen::RowVectorXd x(2);
  x << 0.3, 0.6;
  EXPECT_EQ(c.value_and_grad(x, constant, &g), 3.0);
  EXPECT_EQ(g, Eigen::RowVectorXd::Zero(2));
}

TEST(GradQuery, MatchesFiniteDifferences) {
  Rng rng(8);
  auto cfg = small_config();
  cfg.style = pfnbo::StyleVocabulary::UserPrior;
  const auto m = random_model(cfg, rng);
  std::uniform_real_distribution<double> u(0.1, 0.9);
  for (int t = 0; t < 20; ++t) {
    const int d = 1 + t % 3;
    const auto data = pfnbo::sample_simple_gp(5, d, {}, rng);
    pfnbo::StyleInput s;
    if (t % 2) {
      s.user_prior = pfnbo::UserPriorSpec{};
      for (int j = 0; j < d; ++j) s.user_prior->dims.push_back(pfnbo::DimPrior{{0.2, 0.6}, 0.5});
    }
    const auto c = m.condition(data, s);
    pfnbo::Acquisition acq;
    acq.kind = static_cast<pfnbo::AcqKind>(t % 4);
    acq.f_star = data.y.maxCoeff();
    Eigen::RowVectorXd x(d), g;
    for (int j = 0; j < d; ++j) x(j) = u(rng);
    c.value_and_grad(x, acq, &g);
    for (int j = 0; j < d; ++j) {
      Eigen::RowVectorXd xp = x, xm = x;
      xp(j) += 1e-4;
      xm(j) -= 1e-4;
      const double fd = (c.value_and_grad(xp, acq, nullptr) - c.value_and_grad(xm, acq, nullptr)) / 2e-4;
      EXPECT_NEAR(g(j), fd, 1e-3 * std::max(std::abs(fd), 1e-3)) << "case " << t << " kind " << t % 4;
    }
  }
}

TEST(Training, LossDecreases) {
  Rng rng(9);
  auto cfg = small_config();
  cfg.optim.steps = 300;
  cfg.optim.learning_rate = 3e-3;
  const auto src = pfnbo::prior_source(small_prior(), cfg);
  pfnbo::TrainReport report;
  auto model = pfnbo::train_new(cfg, src, rng, {}, &report);
  double head = 0, tail = 0;
  for (int i = 0; i < 30; ++i) {
    head += report.losses[i];
    tail += report.losses[report.losses.size() - 1 - i];
  }
  EXPECT_LT(tail, head);
  EXPECT_LT(report.final_lr, 1e-4 * cfg.optim.learning_rate);
  EXPECT_EQ(model.steps(), 300);
}

TEST(Training, DeterministicUnderSeed) {
  auto cfg = small_config();
  cfg.optim.steps = 5;
  const auto src = pfnbo::prior_source(small_prior(), cfg);
  Rng a(10), b(10);
  auto ma = pfnbo::train_new(cfg, src, a);
  auto mb = pfnbo::train_new(cfg, src, b);
  for (std::size_t i = 0; i < ma.net().params.size(); ++i) EXPECT_EQ(ma.net().params[i], mb.net().params[i]);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  Rng rng(11);
  auto cfg = small_config();
  cfg.style = pfnbo::StyleVocabulary::Kg;
  const auto m = random_model(cfg, rng);
  const auto path = temp_path("roundtrip.ckpt");
  m.save(path);
  const auto back = pfnbo::PfnModel::load(path);
  const auto d = pfnbo::sample_simple_gp(4, 2, {}, rng);
  const auto q = pfnbo::uniform_inputs(3, 2, rng);
  EXPECT_EQ(m.condition(d).logits(q), back.condition(d).logits(q));
  EXPECT_EQ(back.layout()->borders, m.layout()->borders);
  EXPECT_EQ(back.config().style, pfnbo::StyleVocabulary::Kg);
  std::filesystem::remove(path);
}

TEST(Checkpoint, TruncatedFileIsRejected) {
  Rng rng(12);
  const auto m = random_model(small_config(), rng);
  const auto path = temp_path("truncated.ckpt");
  m.save(path);
  std::filesystem::resize_file(path, std::filesystem::file_size(path) / 2);
  EXPECT_THROW(pfnbo::PfnModel::load(path), pfnbo::CheckpointError);
  std::filesystem::remove(path);
}

TEST(Checkpoint, VersionMismatchIsExplicit) {
  Rng rng(13);
  const auto m = random_model(small_config(), rng);
  const auto path = temp_path("version.ckpt");
  m.save(path);
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(7);
    const char v[4] = {9, 0, 0, 0};
    f.write(v, 4);
  }
  EXPECT_THROW(pfnbo::PfnModel::load(path), pfnbo::VersionError);
  std::filesystem::remove(path);
}

TEST(Checkpoint, BadMagicIsRejected) {
  const auto path = temp_path("magic.ckpt");
  std::ofstream(path) << "not a model at all";
  EXPECT_THROW(pfnbo::PfnModel::load(path), pfnbo::CheckpointError);
  std::filesystem::remove(path);
}

TEST(Schedule, LearningRateGrid) {
  EXPECT_EQ(pfnbo::learning_rate_grid(), (std::vector<double>{1e-3, 3e-4, 1e-4, 5e-5}));
}

}  // namespace
