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

// Riemann distribution: a piecewise-constant density over M finite buckets
// with half-normal tails attached to the outermost borders. Probability
// vectors are laid out as (left tail, bucket 0 .. bucket M-1, right tail).

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "pfnbo/errors.hpp"
#include "pfnbo/stats.hpp"

namespace pfnbo {

struct BucketLayout {
  std::vector<double> borders;  // M+1 strictly increasing values
  double tail_scale_left = 1.0;
  double tail_scale_right = 1.0;

  std::size_t num_buckets() const { return borders.size() - 1; }
  std::size_t num_classes() const { return borders.size() + 1; }
  double width(std::size_t bucket) const { return borders[bucket + 1] - borders[bucket]; }
  double lo() const { return borders.front(); }
  double hi() const { return borders.back(); }

  void validate() const {
    if (borders.empty()) throw DegenerateLayoutError("bucket layout has no borders");
    for (std::size_t i = 0; i + 1 < borders.size(); ++i) {
      if (!(borders[i] < borders[i + 1]))
        throw DegenerateLayoutError("bucket borders must be strictly increasing");
    }
    if (!(tail_scale_left > 0.0) || !(tail_scale_right > 0.0))
      throw DegenerateLayoutError("tail scales must be positive");
  }

  /// Tail scales match the half-normal density at the border to the density
  /// of the adjacent bucket when both carry the same mass.
  static BucketLayout from_borders(std::vector<double> borders) {
    if (borders.size() < 2)
      throw DegenerateLayoutError("need at least one finite bucket to derive tail scales");
    BucketLayout layout;
    layout.borders = std::move(borders);
    layout.tail_scale_left = layout.width(0) * stats::kSqrt2OverPi;
    layout.tail_scale_right = layout.width(layout.num_buckets() - 1) * stats::kSqrt2OverPi;
    layout.validate();
    return layout;
  }
};

/// Equal-prior-mass layout. `num_buckets` counts all output classes including
/// both tails, so the finite borders sit at the i/num_buckets quantiles
/// (i = 1 .. num_buckets-1) and every class owns 1/num_buckets of the samples.
inline BucketLayout build_borders(std::span<const double> prior_outputs, std::size_t num_buckets) {
  if (num_buckets < 2) throw DegenerateLayoutError("num_buckets must be at least 2");
  std::vector<double> sorted(prior_outputs.begin(), prior_outputs.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  std::size_t n_distinct = n == 0 ? 0 : 1;
  for (std::size_t i = 1; i < n; ++i) n_distinct += sorted[i] != sorted[i - 1];
  if (n_distinct < num_buckets)
    throw DegenerateLayoutError("too few distinct prior outputs for " + std::to_string(num_buckets) +
                                " buckets");

  std::vector<double> borders;
  borders.reserve(num_buckets - 1);
  for (std::size_t i = 1; i < num_buckets; ++i) {
    const std::size_t k = (i * n) / num_buckets;  // first sample of class i
    const double border = 0.5 * (sorted[k - 1] + sorted[k]);
    if (!borders.empty() && !(border > borders.back()))
      throw DegenerateLayoutError("tied prior outputs collapse adjacent borders");
    borders.push_back(border);
  }

  BucketLayout layout;
  if (borders.size() >= 2) {
    layout = BucketLayout::from_borders(std::move(borders));
  } else {
    // No finite bucket: fit each half-normal tail to its own samples.
    const double b = borders.front();
    double sl = 0, sr = 0;
    std::size_t nl = 0, nr = 0;
    for (double v : sorted) {
      if (v < b) {
        sl += (b - v) * (b - v);
        ++nl;
      } else {
        sr += (v - b) * (v - b);
        ++nr;
      }
    }
    layout.borders = std::move(borders);
    layout.tail_scale_left = std::sqrt(sl / static_cast<double>(std::max<std::size_t>(nl, 1)));
    layout.tail_scale_right = std::sqrt(sr / static_cast<double>(std::max<std::size_t>(nr, 1)));
    layout.validate();
  }
  return layout;
}

class RiemannDistribution {
 public:
  RiemannDistribution(std::shared_ptr<const BucketLayout> layout, std::vector<double> probs)
      : layout_(std::move(layout)), probs_(std::move(probs)) {
    if (!layout_) throw DomainError("null bucket layout");
    if (probs_.size() != layout_->num_classes())
      throw DomainError("probability vector does not match bucket layout");
    double total = 0.0;
    for (double p : probs_) {
      if (!(p >= 0.0) || !std::isfinite(p)) throw DomainError("negative or non-finite bucket mass");
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-9) throw DomainError("bucket masses must sum to 1");
  }

  const BucketLayout& layout() const { return *layout_; }
  const std::shared_ptr<const BucketLayout>& layout_ptr() const { return layout_; }
  std::span<const double> probs() const { return probs_; }
  double left_mass() const { return probs_.front(); }
  double right_mass() const { return probs_.back(); }
  double bucket_mass(std::size_t i) const { return probs_[i + 1]; }

  double pdf(double y) const {
    const auto& L = *layout_;
    if (y < L.lo()) return left_mass() * stats::half_normal_pdf(L.lo() - y, L.tail_scale_left);
    if (y >= L.hi()) return right_mass() * stats::half_normal_pdf(y - L.hi(), L.tail_scale_right);
    const std::size_t b = bucket_of(y);
    return bucket_mass(b) / L.width(b);
  }

  double log_prob(double y) const {
    const auto& L = *layout_;
    if (y < L.lo())
      return std::log(left_mass()) + stats::half_normal_log_pdf(L.lo() - y, L.tail_scale_left);
    if (y >= L.hi())
      return std::log(right_mass()) + stats::half_normal_log_pdf(y - L.hi(), L.tail_scale_right);
    const std::size_t b = bucket_of(y);
    return std::log(bucket_mass(b)) - std::log(L.width(b));
  }

  double cdf(double y) const {
    const auto& L = *layout_;
    if (y < L.lo())
      return left_mass() * (1.0 - stats::half_normal_cdf(L.lo() - y, L.tail_scale_left));
    double acc = left_mass();
    if (y >= L.hi()) {
      for (std::size_t i = 0; i < L.num_buckets(); ++i) acc += bucket_mass(i);
      return std::min(1.0, acc + right_mass() * stats::half_normal_cdf(y - L.hi(), L.tail_scale_right));
    }
    const std::size_t b = bucket_of(y);
    for (std::size_t i = 0; i < b; ++i) acc += bucket_mass(i);
    return acc + bucket_mass(b) * (y - L.borders[b]) / L.width(b);
  }

  double icdf(double q) const {
    if (!(q > 0.0 && q < 1.0)) throw DomainError("quantile must lie in (0, 1)");
    const auto& L = *layout_;
    if (q < left_mass()) {
      return L.lo() - stats::half_normal_quantile(1.0 - q / left_mass(), L.tail_scale_left);
    }
    double acc = left_mass();
    for (std::size_t i = 0; i < L.num_buckets(); ++i) {
      const double m = bucket_mass(i);
      if (m > 0.0 && q <= acc + m) {
        const double frac = std::clamp((q - acc) / m, 0.0, 1.0);
        return L.borders[i] + frac * L.width(i);
      }
      acc += m;
    }
    if (right_mass() <= 0.0) return L.hi();
    const double u = std::clamp((q - acc) / right_mass(), 0.0, 1.0);
    return L.hi() + stats::half_normal_quantile(u, L.tail_scale_right);
  }

  double mean() const {
    const auto means = class_means();
    return std::inner_product(probs_.begin(), probs_.end(), means.begin(), 0.0);
  }

  /// Mean of each class's normalized density.
  std::vector<double> class_means() const {
    const auto& L = *layout_;
    std::vector<double> out(L.num_classes());
    out.front() = L.lo() - stats::half_normal_mean(L.tail_scale_left);
    for (std::size_t i = 0; i < L.num_buckets(); ++i) out[i + 1] = 0.5 * (L.borders[i] + L.borders[i + 1]);
    out.back() = L.hi() + stats::half_normal_mean(L.tail_scale_right);
    return out;
  }

  /// Per-class P(y > f_star), assuming unit class mass. The bucket terms are
  /// the clipped-overlap fraction (b_{i+1} - min(b_{i+1}, max(f*, b_i))) / width.
  std::vector<double> class_pi(double f_star) const {
    const auto& L = *layout_;
    std::vector<double> out(L.num_classes());
    out.front() = f_star < L.lo() ? stats::half_normal_cdf(L.lo() - f_star, L.tail_scale_left) : 0.0;
    for (std::size_t i = 0; i < L.num_buckets(); ++i) {
      const double hi = L.borders[i + 1];
      out[i + 1] = (hi - std::min(hi, std::max(f_star, L.borders[i]))) / L.width(i);
    }
    out.back() = f_star > L.hi() ? 1.0 - stats::half_normal_cdf(f_star - L.hi(), L.tail_scale_right) : 1.0;
    return out;
  }

  /// Per-class E[max(y - f_star, 0)], assuming unit class mass.
  std::vector<double> class_ei(double f_star) const {
    const auto& L = *layout_;
    std::vector<double> out(L.num_classes());
    {
      // left tail: y = lo - sigma*|Z|
      const double s = L.lo() - f_star;
      const double sig = L.tail_scale_left;
      if (s <= 0.0) {
        out.front() = 0.0;
      } else {
        const double z = s / sig;
        out.front() = s * (2.0 * stats::normal_cdf(z) - 1.0) - 2.0 * sig * (stats::kInvSqrt2Pi - stats::normal_pdf(z));
        out.front() = std::max(out.front(), 0.0);
      }
    }
    for (std::size_t i = 0; i < L.num_buckets(); ++i) {
      const double a = L.borders[i], b = L.borders[i + 1];
      double v;
      if (f_star <= a) v = 0.5 * (a + b) - f_star;
      else if (f_star >= b) v = 0.0;
      else v = (b - f_star) * (b - f_star) / (2.0 * (b - a));
      out[i + 1] = v;
    }
    {
      // right tail: y = hi + sigma*|Z|
      const double t = f_star - L.hi();
      const double sig = L.tail_scale_right;
      if (t <= 0.0) {
        out.back() = -t + stats::half_normal_mean(sig);
      } else {
        const double z = t / sig;
        out.back() = std::max(0.0, 2.0 * (sig * stats::normal_pdf(z) - t * (1.0 - stats::normal_cdf(z))));
      }
    }
    return out;
  }

  /// Per-class CDF at y, assuming unit class mass.
  std::vector<double> class_cdf(double y) const {
    const auto& L = *layout_;
    std::vector<double> out(L.num_classes());
    out.front() = y < L.lo() ? 1.0 - stats::half_normal_cdf(L.lo() - y, L.tail_scale_left) : 1.0;
    for (std::size_t i = 0; i < L.num_buckets(); ++i)
      out[i + 1] = std::clamp((y - L.borders[i]) / L.width(i), 0.0, 1.0);
    out.back() = y > L.hi() ? stats::half_normal_cdf(y - L.hi(), L.tail_scale_right) : 0.0;
    return out;
  }

  template <class Rng>
  double sample(Rng& rng) const {
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    double u = u01(rng);
    std::size_t c = 0;
    for (; c + 1 < probs_.size(); ++c) {
      if (u < probs_[c]) break;
      u -= probs_[c];
    }
    const auto& L = *layout_;
    if (c == 0) return L.lo() - std::abs(std::normal_distribution<double>(0.0, L.tail_scale_left)(rng));
    if (c + 1 == probs_.size())
      return L.hi() + std::abs(std::normal_distribution<double>(0.0, L.tail_scale_right)(rng));
    return L.borders[c - 1] + u01(rng) * L.width(c - 1);
  }

 private:
  std::size_t bucket_of(double y) const {
    const auto& b = layout_->borders;
    const auto it = std::upper_bound(b.begin(), b.end(), y);
    return static_cast<std::size_t>(it - b.begin()) - 1;
  }

  std::shared_ptr<const BucketLayout> layout_;
  std::vector<double> probs_;
};

inline double log_prob(const RiemannDistribution& d, double y) { return d.log_prob(y); }
inline double mean(const RiemannDistribution& d) { return d.mean(); }
inline double cdf(const RiemannDistribution& d, double y) { return d.cdf(y); }
inline double icdf(const RiemannDistribution& d, double q) { return d.icdf(q); }

inline double acq_pi(const RiemannDistribution& d, double f_star) {
  const auto c = d.class_pi(f_star);
  const auto p = d.probs();
  return std::clamp(std::inner_product(p.begin(), p.end(), c.begin(), 0.0), 0.0, 1.0);
}

inline double acq_ei(const RiemannDistribution& d, double f_star) {
  const auto c = d.class_ei(f_star);
  const auto p = d.probs();
  return std::max(0.0, std::inner_product(p.begin(), p.end(), c.begin(), 0.0));
}

inline double acq_ucb(const RiemannDistribution& d, double quantile) { return d.icdf(quantile); }

/// EI after collapsing the distribution onto a point mass at its mean.
inline double acq_ei_on_mean(const RiemannDistribution& d, double f_star) {
  return std::max(d.mean() - f_star, 0.0);
}

inline double acq_pi_on_mean(const RiemannDistribution& d, double f_star) {
  return d.mean() > f_star ? 1.0 : 0.0;
}

}  // namespace pfnbo
