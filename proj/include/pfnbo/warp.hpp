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

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Core>

#include "pfnbo/errors.hpp"

namespace pfnbo {

/// Kumaraswamy CDF w(x; a, b) = 1 - (1 - x^a)^b, a monotone bijection of [0, 1].
inline double kumaraswamy(double x, double a, double b) {
  if (!(x >= 0.0 && x <= 1.0)) throw DomainError("kumaraswamy input outside [0, 1]");
  return -std::expm1(b * std::log1p(-std::pow(x, a)));
}

inline double kumaraswamy_inverse(double w, double a, double b) {
  if (!(w >= 0.0 && w <= 1.0)) throw DomainError("kumaraswamy inverse input outside [0, 1]");
  // x = (1 - (1 - w)^(1/b))^(1/a)
  return std::pow(-std::expm1(std::log1p(-w) / b), 1.0 / a);
}

/// d w / d x, used to chain gradients through a fitted warp.
inline double kumaraswamy_derivative(double x, double a, double b) {
  if (x <= 0.0 || x >= 1.0) {
    const double xc = std::clamp(x, 1e-12, 1.0 - 1e-12);
    return kumaraswamy_derivative(xc, a, b);
  }
  const double xa = std::pow(x, a);
  return a * b * xa / x * std::pow(1.0 - xa, b - 1.0);
}

/// Per-feature Kumaraswamy parameters; identity when every a = b = 1.
struct WarpParams {
  std::vector<double> a;
  std::vector<double> b;

  static WarpParams identity(int dims) {
    return {std::vector<double>(static_cast<std::size_t>(dims), 1.0), std::vector<double>(static_cast<std::size_t>(dims), 1.0)};
  }

  int dims() const { return static_cast<int>(a.size()); }

  bool is_identity() const {
    for (std::size_t j = 0; j < a.size(); ++j)
      if (a[j] != 1.0 || b[j] != 1.0) return false;
    return true;
  }

  /// Rows are points.
  Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const {
    Eigen::MatrixXd out(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      for (Eigen::Index j = 0; j < x.cols(); ++j)
        out(i, j) = kumaraswamy(std::clamp(x(i, j), 0.0, 1.0), a[static_cast<std::size_t>(j)], b[static_cast<std::size_t>(j)]);
    return out;
  }

  Eigen::MatrixXd invert(const Eigen::MatrixXd& w) const {
    Eigen::MatrixXd out(w.rows(), w.cols());
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j)
        out(i, j) = kumaraswamy_inverse(std::clamp(w(i, j), 0.0, 1.0), a[static_cast<std::size_t>(j)], b[static_cast<std::size_t>(j)]);
    return out;
  }
};

}  // namespace pfnbo
