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
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "pfnbo/bo.hpp"
#include "support/small_model.hpp"

namespace {

using pfnbo::Rng;

double bowl(const Eigen::RowVectorXd& x) { return -(x.array() - 0.3).square().sum(); }

pfnbo::BoConfig small_run(int budget) {
  pfnbo::BoConfig c;
  c.budget = budget;
  return c;
}

pfnbo::ProposeConfig quick() {
  pfnbo::ProposeConfig c;
  c.candidates = 300;
  c.top_k = 5;
  c.max_iterations = 10;
  return c;
}

TEST(Sobol, FirstPowerOfTwoStratifiesEachCoordinate) {
  Rng rng(1);
  for (int d : {1, 3, 6}) {
    const auto x = pfnbo::sobol_points(16, d, rng);
    for (int j = 0; j < d; ++j) {
      std::set<int> cells;
      for (int i = 0; i < 16; ++i) {
        ASSERT_GE(x(i, j), 0.0);
        ASSERT_LT(x(i, j), 1.0);
        cells.insert(static_cast<int>(x(i, j) * 16));
      }
      EXPECT_EQ(cells.size(), 16u) << "d=" << d << " j=" << j;
    }
  }
}

TEST(Sobol, ShiftDependsOnSeed) {
  Rng a(1), b(2);
  EXPECT_NE(pfnbo::sobol_points(4, 2, a), pfnbo::sobol_points(4, 2, b));
}

TEST(InitialDesign, Shapes) {
  Rng rng(2);
  const auto s = pfnbo::SearchSpace::unit_cube(3);
  EXPECT_EQ(pfnbo::initial_design(s, pfnbo::InitDesign::SobolD, rng).rows(), 3);
  EXPECT_EQ(pfnbo::initial_design(s, pfnbo::InitDesign::InitMin, rng), Eigen::MatrixXd::Zero(1, 3));
  EXPECT_EQ(pfnbo::initial_design(s, pfnbo::InitDesign::InitMid, rng), Eigen::MatrixXd::Constant(1, 3, 0.5));
  EXPECT_THROW(pfnbo::parse_init_design("lhs"), pfnbo::ConfigError);
}

TEST(RunBo, LengthAndIncumbentAreConsistent) {
  Rng rng(3);
  pfnbo::RandomProposer p;
  const auto s = pfnbo::SearchSpace::unit_cube(2);
  const auto t = pfnbo::run_bo(bowl, p, s, small_run(10), rng);
  ASSERT_EQ(t.steps.size(), 12u);
  EXPECT_EQ(t.status, "complete");
  double best = -INFINITY;
  for (const auto& st : t.steps) {
    best = std::max(best, st.y_raw);
    EXPECT_EQ(st.incumbent, best);
    EXPECT_EQ(st.y_raw, bowl(st.x));
  }
  EXPECT_EQ(t.steps[0].acquisition, "init");
  EXPECT_EQ(t.steps[2].acquisition, "random");
}

TEST(RunBo, RawBoundsAreRespected) {
  Rng rng(4);
  pfnbo::RandomProposer p;
  pfnbo::SearchSpace s;
  s.dims = {{pfnbo::DimKind::Continuous, -5.0, 10.0}, {pfnbo::DimKind::Integer, 2.0, 7.0}, {pfnbo::DimKind::Boolean, 0.0, 1.0}};
  const auto t = pfnbo::run_bo([](const Eigen::RowVectorXd& x) { return x.sum(); }, p, s, small_run(15), rng);
  for (const auto& st : t.steps) EXPECT_TRUE(s.contains(st.x));
}

TEST(RunBo, Deterministic) {
  const auto s = pfnbo::SearchSpace::unit_cube(2);
  auto run = [&] {
    Rng rng(5);
    pfnbo::gp::KernelParams kp;
    pfnbo::GpProposer p(kp, quick());
    return pfnbo::run_bo(bowl, p, s, small_run(5), rng);
  };
  const auto a = run(), b = run();
  ASSERT_EQ(a.steps.size(), b.steps.size());
  for (std::size_t i = 0; i < a.steps.size(); ++i) EXPECT_EQ(a.steps[i].x, b.steps[i].x);
}

TEST(RunBo, GpFindsBowlOptimum) {
  Rng rng(6);
  pfnbo::gp::KernelParams kp;
  kp.lengthscales = {0.3};
  pfnbo::GpProposer p(kp, quick());
  const auto t = pfnbo::run_bo(bowl, p, pfnbo::SearchSpace::unit_cube(1), small_run(12), rng);
  EXPECT_GT(t.incumbent(), -1e-3);
}

TEST(RunBo, MapGpRuns) {
  Rng rng(7);
  pfnbo::gp::MapFitConfig fit;
  fit.restarts = 2;
  fit.steps = 30;
  pfnbo::GpProposer p(pfnbo::gp::KernelKind::Matern32, {}, fit, quick());
  const auto t = pfnbo::run_bo(bowl, p, pfnbo::SearchSpace::unit_cube(2), small_run(4), rng);
  EXPECT_EQ(t.steps.size(), 6u);
  EXPECT_EQ(p.name(), "gp-map");
}

TEST(RunBo, PoolExhaustionStopsEarly) {
  Rng rng(8);
  pfnbo::SearchSpace s = pfnbo::SearchSpace::unit_cube(1);
  Eigen::MatrixXd pool(3, 1);
  pool << 0.1, 0.5, 0.9;
  s.pool = pool;
  pfnbo::gp::KernelParams kp;
  pfnbo::GpProposer p(kp, quick());
  const auto t = pfnbo::run_bo(bowl, p, s, small_run(10), rng);
  EXPECT_EQ(t.status, "exhausted");
  ASSERT_EQ(t.steps.size(), 3u);
  std::set<std::size_t> seen;
  for (const auto& st : t.steps) seen.insert(*st.pool_index);
  EXPECT_EQ(seen.size(), 3u);
}

TEST(RunBo, RetriesOnceThenAborts) {
  Rng rng(9);
  pfnbo::RandomProposer p;
  int calls = 0;
  auto flaky = [&](const Eigen::RowVectorXd& x) {
    ++calls;
    if (calls == 3) throw std::runtime_error("transient");
    return bowl(x);
  };
  const auto t = pfnbo::run_bo(flaky, p, pfnbo::SearchSpace::unit_cube(1), small_run(3), rng);
  EXPECT_EQ(t.status, "complete");
  EXPECT_EQ(t.failed_evaluations, 1);
  EXPECT_EQ(t.steps.size(), 4u);

  int n = 0;
  auto broken = [&](const Eigen::RowVectorXd& x) { return ++n > 1 ? NAN : bowl(x); };
  const auto u = pfnbo::run_bo(broken, p, pfnbo::SearchSpace::unit_cube(1), small_run(3), rng);
  EXPECT_EQ(u.status.rfind("aborted", 0), 0u);
  EXPECT_EQ(u.steps.size(), 1u);
}

TEST(RunBo, OutputTransformToggleDoesNotChangeRawRecord) {
  Rng a(10), b(10);
  pfnbo::RandomProposer p;
  auto on = small_run(5), off = small_run(5);
  off.output_transform = false;
  const auto s = pfnbo::SearchSpace::unit_cube(2);
  const auto t1 = pfnbo::run_bo(bowl, p, s, on, a);
  const auto t2 = pfnbo::run_bo(bowl, p, s, off, b);
  ASSERT_EQ(t1.steps.size(), t2.steps.size());
  for (std::size_t i = 0; i < t1.steps.size(); ++i) EXPECT_EQ(t1.steps[i].y_raw, t2.steps[i].y_raw);
  EXPECT_EQ(t2.steps.back().y_transformed, t2.steps.back().y_raw);
}

TEST(RunBo, PfnProposerRecordsAcquisitions) {
  Rng rng(11);
  auto model = std::make_shared<const pfnbo::PfnModel>(pfnbo::testing::random_model(pfnbo::testing::small_config(), rng));
  pfnbo::PfnProposerConfig cfg;
  cfg.acq.kind = pfnbo::AcqKind::Pi;
  cfg.propose = quick();
  cfg.warp = true;
  cfg.warp_every = 2;
  cfg.warp_fit.restarts = 2;
  cfg.warp_fit.steps = 5;
  pfnbo::PfnProposer p(model, cfg);
  const auto t = pfnbo::run_bo(bowl, p, pfnbo::SearchSpace::unit_cube(2), small_run(4), rng);
  ASSERT_EQ(t.steps.size(), 6u);
  for (std::size_t i = 2; i < t.steps.size(); ++i) EXPECT_EQ(t.steps[i].acquisition, "pi");
  EXPECT_EQ(p.warp_fits().size(), 2u);
  for (const auto& f : p.warp_fits()) EXPECT_GE(f.objective, f.identity_objective);
}

TEST(RunBo, KgNeedsKgVocabulary) {
  Rng rng(12);
  auto model = std::make_shared<const pfnbo::PfnModel>(pfnbo::testing::random_model(pfnbo::testing::small_config(), rng));
  pfnbo::PfnProposerConfig cfg;
  cfg.kg_probability = 0.5;
  EXPECT_THROW(pfnbo::PfnProposer(model, cfg), pfnbo::ConfigError);
}

TEST(Trajectory, CsvAndMetadata) {
  Rng rng(13);
  pfnbo::RandomProposer p;
  auto t = pfnbo::run_bo(bowl, p, pfnbo::SearchSpace::unit_cube(2), small_run(2), rng);
  t.seed = 13;
  t.config_fingerprint = pfnbo::fingerprint("{}");
  std::ostringstream os;
  pfnbo::write_trajectory_csv(t, os);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "iteration,x_0,x_1,y_raw,incumbent");
  int rows = 0;
  while (std::getline(is, line)) ++rows;
  EXPECT_EQ(rows, 4);
  const auto j = pfnbo::trajectory_metadata(t);
  EXPECT_EQ(j["seed"], 13);
  EXPECT_EQ(j["acquisitions"].size(), 4u);
  EXPECT_EQ(j["config_hash"].get<std::string>().size(), 16u);
}

}  // namespace
