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
#include <numbers>
#include <numeric>
#include <span>
#include <vector>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/special_functions/erf.hpp>

namespace pfnbo::stats {

inline constexpr double kInvSqrt2Pi = 0.3989422804014327;  // 1/sqrt(2*pi)
inline constexpr double kSqrt2OverPi = 0.7978845608028654;  // sqrt(2/pi)

inline double normal_pdf(double z) { return kInvSqrt2Pi * std::exp(-0.5 * z * z); }

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

inline double normal_quantile(double p) {
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

/// Half-normal with scale `sigma` on [0, inf).
inline double half_normal_pdf(double t, double sigma) {
  if (t < 0.0) return 0.0;
  const double z = t / sigma;
  return kSqrt2OverPi / sigma * std::exp(-0.5 * z * z);
}

inline double half_normal_log_pdf(double t, double sigma) {
  const double z = t / sigma;
  return std::log(kSqrt2OverPi / sigma) - 0.5 * z * z;
}

inline double half_normal_cdf(double t, double sigma) {
  if (t <= 0.0) return 0.0;
  return std::erf(t / (sigma * std::numbers::sqrt2));
}

inline double half_normal_quantile(double u, double sigma) {
  if (u <= 0.0) return 0.0;
  return sigma * std::numbers::sqrt2 * boost::math::erf_inv(std::min(u, 1.0 - 1e-16));
}

inline double half_normal_mean(double sigma) { return sigma * kSqrt2OverPi; }

inline double mean(std::span<const double> xs) {
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

/// Unbiased sample variance.
inline double variance(std::span<const double> xs) {
  const double m = mean(xs);
  double acc = 0.0;
  for (double x : xs) acc += (x - m) * (x - m);
  return acc / static_cast<double>(xs.size() - 1);
}

inline double standard_error(std::span<const double> xs) {
  return std::sqrt(variance(xs) / static_cast<double>(xs.size()));
}

/// Average ranks (1-based); tied values share the mean of their positions.
inline std::vector<double> average_ranks(std::span<const double> xs) {
  std::vector<std::size_t> idx(xs.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return xs[a] < xs[b]; });
  std::vector<double> ranks(xs.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && xs[idx[j + 1]] == xs[idx[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
    i = j + 1;
  }
  return ranks;
}

inline double spearman(std::span<const double> a, std::span<const double> b) {
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  const double ma = mean(ra), mb = mean(rb);
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

/// One-sided exact sign test: P(X >= successes) for X ~ Binomial(trials, 1/2).
inline double sign_test_p_value(int successes, int trials) {
  double p = 0.0;
  for (int k = successes; k <= trials; ++k) {
    p += std::exp(std::lgamma(trials + 1.0) - std::lgamma(k + 1.0) - std::lgamma(trials - k + 1.0) -
                  trials * std::numbers::ln2);
  }
  return std::min(p, 1.0);
}

}  // namespace pfnbo::stats
