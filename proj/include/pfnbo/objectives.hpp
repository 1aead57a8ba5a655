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

#pragma once

// Standard synthetic test functions, negated so that larger is better.

#include <array>
#include <functional>
#include <cmath>
#include <numbers>
#include <string>

#include <Eigen/Core>

#include "pfnbo/acqopt.hpp"
#include "pfnbo/errors.hpp"

namespace pfnbo {

struct TestFunction {
  std::string name;
  SearchSpace space;
  double optimum = 0.0;  // maximal value
  std::function<double(const Eigen::RowVectorXd&)> f;
};

inline double branin(const Eigen::RowVectorXd& x) {
  constexpr double pi = std::numbers::pi;
  const double b = 5.1 / (4.0 * pi * pi), c = 5.0 / pi, t = 1.0 / (8.0 * pi);
  const double u = x(1) - b * x(0) * x(0) + c * x(0) - 6.0;
  return -(u * u + 10.0 * (1.0 - t) * std::cos(x(0)) + 10.0);
}

namespace detail {

template <std::size_t D, std::size_t N>
double hartmann(const Eigen::RowVectorXd& x, const std::array<std::array<double, D>, N>& a,
                const std::array<std::array<double, D>, N>& p) {
  constexpr std::array<double, 4> alpha{1.0, 1.2, 3.0, 3.2};
  double s = 0.0;
  for (std::size_t i = 0; i < N; ++i) {
    double e = 0.0;
    for (std::size_t j = 0; j < D; ++j) {
      const double dx = x(static_cast<Eigen::Index>(j)) - p[i][j];
      e += a[i][j] * dx * dx;
    }
    s += alpha[i] * std::exp(-e);
  }
  return s;
}

}  // namespace detail

inline double hartmann3(const Eigen::RowVectorXd& x) {
  static constexpr std::array<std::array<double, 3>, 4> a{{{3.0, 10, 30}, {0.1, 10, 35}, {3.0, 10, 30}, {0.1, 10, 35}}};
  static constexpr std::array<std::array<double, 3>, 4> p{{{0.3689, 0.1170, 0.2673},
                                                           {0.4699, 0.4387, 0.7470},
                                                           {0.1091, 0.8732, 0.5547},
                                                           {0.0381, 0.5743, 0.8828}}};
  return detail::hartmann(x, a, p);
}

inline double hartmann6(const Eigen::RowVectorXd& x) {
  static constexpr std::array<std::array<double, 6>, 4> a{{{10, 3, 17, 3.5, 1.7, 8},
                                                           {0.05, 10, 17, 0.1, 8, 14},
                                                           {3, 3.5, 1.7, 10, 17, 8},
                                                           {17, 8, 0.05, 10, 0.1, 14}}};
  static constexpr std::array<std::array<double, 6>, 4> p{{{0.1312, 0.1696, 0.5569, 0.0124, 0.8283, 0.5886},
                                                           {0.2329, 0.4135, 0.8307, 0.3736, 0.1004, 0.9991},
                                                           {0.2348, 0.1451, 0.3522, 0.2883, 0.3047, 0.6650},
                                                           {0.4047, 0.8828, 0.8732, 0.5743, 0.1091, 0.0381}}};
  return detail::hartmann(x, a, p);
}

/// Negated squared distance to 0.3 in every coordinate of [0, 1]^d.
inline double bowl(const Eigen::RowVectorXd& x) { return -(x.array() - 0.3).square().sum(); }

inline TestFunction make_test_function(const std::string& name, int dims) {
  if (name == "branin") {
    SearchSpace s;
    s.dims = {{DimKind::Continuous, -5.0, 10.0}, {DimKind::Continuous, 0.0, 15.0}};
    return {name, s, -0.39788735772973816, branin};
  }
  if (name == "hartmann3") return {name, SearchSpace::unit_cube(3), 3.86278214782076, hartmann3};
  if (name == "hartmann6") return {name, SearchSpace::unit_cube(6), 3.32236801141551, hartmann6};
  if (name == "bowl") {
    if (dims < 1) throw ConfigError("bowl needs dims >= 1");
    return {name, SearchSpace::unit_cube(dims), 0.0, bowl};
  }
  throw ConfigError("unknown test function '" + name + "'");
}

}  // namespace pfnbo
