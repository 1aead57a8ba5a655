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

#include "pfnbo/warp.hpp"

namespace {

TEST(Kumaraswamy, IdentityAtUnitParameters) {
  for (double x : {0.0, 0.13, 0.5, 0.98, 1.0}) EXPECT_NEAR(pfnbo::kumaraswamy(x, 1.0, 1.0), x, 1e-15);
}

TEST(Kumaraswamy, ClosedFormValue) {
  // 1 - (1 - 0.5^2)^3 = 1 - 0.421875
  EXPECT_NEAR(pfnbo::kumaraswamy(0.5, 2.0, 3.0), 0.578125, 1e-14);
}

TEST(Kumaraswamy, EndpointsFixed) {
  EXPECT_EQ(pfnbo::kumaraswamy(0.0, 0.3, 4.0), 0.0);
  EXPECT_EQ(pfnbo::kumaraswamy(1.0, 0.3, 4.0), 1.0);
}

TEST(Kumaraswamy, InverseRoundTrip) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0, 1);
  std::normal_distribution<double> g(0, 1);
  for (int i = 0; i < 1000; ++i) {
    const double a = std::exp(g(rng)), b = std::exp(g(rng)), x = u(rng);
    const double w = pfnbo::kumaraswamy(x, a, b);
    const double back = pfnbo::kumaraswamy_inverse(w, a, b);
    EXPECT_NEAR(pfnbo::kumaraswamy(back, a, b), w, 1e-14);
    // x-space error is amplified where the warp is flat.
    EXPECT_NEAR(back, x, 1e-10 + 1e-14 / pfnbo::kumaraswamy_derivative(x, a, b));
  }
}

TEST(Kumaraswamy, StrictlyMonotone) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0, 1);
  std::normal_distribution<double> g1(0, 0.976), g2(0, 0.8003);
  for (int i = 0; i < 10000; ++i) {
    const double a = std::exp(g1(rng)), b = std::exp(g2(rng));
    double x1 = u(rng), x2 = u(rng);
    if (x1 == x2) continue;
    if (x1 > x2) std::swap(x1, x2);
    const double w1 = pfnbo::kumaraswamy(x1, a, b), w2 = pfnbo::kumaraswamy(x2, a, b);
    EXPECT_LE(w1, w2);
    EXPECT_GE(w1, 0.0);
    EXPECT_LE(w2, 1.0);
  }
}

TEST(Kumaraswamy, DerivativeMatchesFiniteDifference) {
  for (double x : {0.1, 0.4, 0.77}) {
    const double fd = (pfnbo::kumaraswamy(x + 1e-6, 1.7, 0.6) - pfnbo::kumaraswamy(x - 1e-6, 1.7, 0.6)) / 2e-6;
    EXPECT_NEAR(pfnbo::kumaraswamy_derivative(x, 1.7, 0.6), fd, 1e-6);
  }
}

TEST(Kumaraswamy, RejectsOutOfRange) {
  EXPECT_THROW(pfnbo::kumaraswamy(1.2, 1, 1), pfnbo::DomainError);
  EXPECT_THROW(pfnbo::kumaraswamy_inverse(-0.1, 1, 1), pfnbo::DomainError);
}

TEST(WarpParams, ApplyInvertMatrix) {
  pfnbo::WarpParams w{{0.5, 2.0}, {1.5, 0.7}};
  Eigen::MatrixXd x(3, 2);
  x << 0.1, 0.9, 0.5, 0.5, 0.0, 1.0;
  const Eigen::MatrixXd back = w.invert(w.apply(x));
  EXPECT_LT((back - x).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_TRUE(pfnbo::WarpParams::identity(2).is_identity());
  EXPECT_FALSE(w.is_identity());
}

}  // namespace
