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

// Test-only Monte-Carlo sampler for Riemann distributions. Deliberately
// independent of RiemannDistribution's own sample/cdf code paths.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

namespace pfnbo::testing {

struct RiemannSpec {
  std::vector<double> borders;
  std::vector<double> probs;  // left, buckets..., right
  double sigma_left = 1.0;
  double sigma_right = 1.0;
};

class IndependentSampler {
 public:
  explicit IndependentSampler(const RiemannSpec& spec) : spec_(spec) {
    double acc = 0;
    for (double p : spec.probs) {
      acc += p;
      cumulative_.push_back(acc);
    }
  }

  template <class Rng>
  double operator()(Rng& rng) {
    const double u = unif_(rng) * cumulative_.back();
    std::size_t c = static_cast<std::size_t>(std::upper_bound(cumulative_.begin(), cumulative_.end(), u) -
                                             cumulative_.begin());
    c = std::min(c, cumulative_.size() - 1);
    if (c == 0) return spec_.borders.front() - spec_.sigma_left * std::abs(gauss_(rng));
    if (c == cumulative_.size() - 1) return spec_.borders.back() + spec_.sigma_right * std::abs(gauss_(rng));
    const double a = spec_.borders[c - 1], b = spec_.borders[c];
    return a + (b - a) * unif_(rng);
  }

 private:
  RiemannSpec spec_;
  std::vector<double> cumulative_;
  std::uniform_real_distribution<double> unif_{0.0, 1.0};
  std::normal_distribution<double> gauss_{0.0, 1.0};
};

template <class Rng>
RiemannSpec random_spec(Rng& rng, std::size_t max_buckets = 20) {
  std::uniform_int_distribution<std::size_t> nb(1, max_buckets);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::exponential_distribution<double> ex(1.0);
  RiemannSpec s;
  const std::size_t m = nb(rng);
  double x = -2.0 + 2.0 * u(rng);
  s.borders.push_back(x);
  for (std::size_t i = 0; i < m; ++i) {
    x += 0.05 + u(rng);
    s.borders.push_back(x);
  }
  double total = 0;
  for (std::size_t i = 0; i < m + 2; ++i) {
    double w = ex(rng);
    if (i == 0 || i == m + 1) w *= 0.3 * u(rng);
    s.probs.push_back(w);
    total += w;
  }
  for (auto& p : s.probs) p /= total;
  double fix = 1.0;
  for (std::size_t i = 0; i + 1 < s.probs.size(); ++i) fix -= s.probs[i];
  s.probs.back() = std::max(0.0, fix);
  s.sigma_left = 0.1 + u(rng);
  s.sigma_right = 0.1 + u(rng);
  return s;
}

}  // namespace pfnbo::testing
