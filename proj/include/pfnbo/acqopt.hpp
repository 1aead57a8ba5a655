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

// Acquisition maximization over the unit cube: random candidates plus the
// observed points, the best of which are refined by projected quasi-Newton
// ascent; or exhaustive scoring of a discrete pool.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "pfnbo/acquisition.hpp"
#include "pfnbo/errors.hpp"
#include "pfnbo/gp.hpp"
#include "pfnbo/pfn.hpp"
#include "pfnbo/transforms.hpp"

namespace pfnbo {

enum class DimKind { Continuous, Integer, Boolean };

struct Dimension {
  DimKind kind = DimKind::Continuous;
  double lo = 0.0;
  double hi = 1.0;
};

struct SearchSpace {
  std::vector<Dimension> dims;
  std::optional<Eigen::MatrixXd> pool;  // rows are raw points

  static SearchSpace unit_cube(int d) { return {std::vector<Dimension>(static_cast<std::size_t>(d)), std::nullopt}; }

  int size() const { return static_cast<int>(dims.size()); }

  void validate() const {
    if (dims.empty()) throw DomainError("search space has no dimensions");
    for (const auto& d : dims) {
      if (d.kind == DimKind::Boolean && (d.lo != 0.0 || d.hi != 1.0)) throw DomainError("boolean dimensions span [0, 1]");
      if (!(d.lo < d.hi)) throw DomainError("search space bounds must satisfy lo < hi");
      if (d.kind == DimKind::Integer && (d.lo != std::floor(d.lo) || d.hi != std::floor(d.hi)))
        throw DomainError("integer bounds must be integral");
    }
    if (pool && (pool->rows() < 1 || pool->cols() != size())) throw DomainError("candidate pool must be nonempty and match the space");
  }

  UnitCubeMap cube() const {
    std::vector<double> lo, hi;
    for (const auto& d : dims) {
      lo.push_back(d.lo);
      hi.push_back(d.hi);
    }
    return {lo, hi};
  }

  bool contains(const Eigen::RowVectorXd& x) const {
    for (int j = 0; j < size(); ++j) {
      const auto& d = dims[static_cast<std::size_t>(j)];
      if (!(x(j) >= d.lo && x(j) <= d.hi)) return false;
      if (d.kind != DimKind::Continuous && x(j) != std::floor(x(j))) return false;
    }
    return true;
  }
};

/// Rounds up with probability frac(x), down otherwise.
template <class R>
double probabilistic_round(double x, R& rng) {
  const double f = std::floor(x);
  const double frac = x - f;
  if (frac == 0.0) return f;
  return std::bernoulli_distribution(frac)(rng) ? f + 1.0 : f;
}

/// Applies probabilistic rounding to the integer and boolean dimensions.
template <class R>
Eigen::RowVectorXd round_to_space(const SearchSpace& space, Eigen::RowVectorXd x, R& rng) {
  for (int j = 0; j < space.size(); ++j) {
    const auto& d = space.dims[static_cast<std::size_t>(j)];
    x(j) = std::clamp(x(j), d.lo, d.hi);
    if (d.kind != DimKind::Continuous) x(j) = std::clamp(probabilistic_round(x(j), rng), d.lo, d.hi);
  }
  return x;
}

struct ProposeConfig {
  int candidates = 10000;
  int top_k = 100;
  int max_iterations = 30;
  double grad_tolerance = 1e-6;
};

/// Acquisition surface of a conditioned PFN.
struct PfnSurface {
  const Conditioned& model;
  Acquisition acq;
  std::vector<double> values(const Eigen::MatrixXd& x) const { return model.evaluate(x, acq); }
  double value_and_grad(const Eigen::RowVectorXd& x, Eigen::RowVectorXd* grad) const {
    return model.value_and_grad(x, acq, grad);
  }
};

/// Closed-form GP EI surface; gradients by central differences.
struct GpEiSurface {
  const gp::GpPosterior& post;
  double f_star = 0.0;
  double value(const Eigen::RowVectorXd& x) const {
    const auto [m, v] = post.predict(x);
    return gp::gaussian_ei(m, v, f_star);
  }
  std::vector<double> values(const Eigen::MatrixXd& x) const {
    std::vector<double> out(static_cast<std::size_t>(x.rows()));
    for (Eigen::Index i = 0; i < x.rows(); ++i) out[static_cast<std::size_t>(i)] = value(x.row(i));
    return out;
  }
  double value_and_grad(const Eigen::RowVectorXd& x, Eigen::RowVectorXd* grad) const {
    const double v = value(x);
    if (grad) {
      grad->resize(x.size());
      for (Eigen::Index j = 0; j < x.size(); ++j) {
        const double h = 1e-6;
        Eigen::RowVectorXd xp = x, xm = x;
        xp(j) = std::min(x(j) + h, 1.0);
        xm(j) = std::max(x(j) - h, 0.0);
        (*grad)(j) = (value(xp) - value(xm)) / (xp(j) - xm(j));
      }
    }
    return v;
  }
};

struct Candidate {
  Eigen::RowVectorXd x;
  double value = 0.0;
  double start_value = 0.0;
  int iterations = 0;
};

/// Projected BFGS ascent on [0, 1]^d with backtracking; never lowers the value.
template <class Surface>
Candidate refine(const Surface& s, Eigen::RowVectorXd x, const ProposeConfig& cfg) {
  const Eigen::Index d = x.size();
  Candidate c;
  Eigen::RowVectorXd g;
  double f = s.value_and_grad(x, &g);
  c.start_value = f;
  Eigen::MatrixXd H = Eigen::MatrixXd::Identity(d, d);
  auto projected_norm = [&](const Eigen::RowVectorXd& p, const Eigen::RowVectorXd& gr) {
    double n = 0;
    for (Eigen::Index j = 0; j < d; ++j) {
      const bool blocked = (p(j) <= 0.0 && gr(j) < 0.0) || (p(j) >= 1.0 && gr(j) > 0.0);
      if (!blocked) n = std::max(n, std::abs(gr(j)));
    }
    return n;
  };
  int it = 0;
  for (; it < cfg.max_iterations && g.allFinite(); ++it) {
    if (projected_norm(x, g) < cfg.grad_tolerance) break;
    Eigen::RowVectorXd dir = (H * g.transpose()).transpose();
    for (Eigen::Index j = 0; j < d; ++j)
      if ((x(j) <= 0.0 && dir(j) < 0.0) || (x(j) >= 1.0 && dir(j) > 0.0)) dir(j) = 0.0;
    if (dir.dot(g) <= 0.0) {
      // Not an ascent direction: fall back to the projected gradient.
      dir = g;
      for (Eigen::Index j = 0; j < d; ++j)
        if ((x(j) <= 0.0 && dir(j) < 0.0) || (x(j) >= 1.0 && dir(j) > 0.0)) dir(j) = 0.0;
      H.setIdentity();
    }
    const double dn = dir.cwiseAbs().maxCoeff();
    if (!(dn > 0.0)) break;
    double t = std::min(1.0, 0.25 / dn);  // first trial moves at most a quarter of the box
    bool accepted = false;
    Eigen::RowVectorXd xn, gn;
    double fn = f;
    for (int ls = 0; ls < 20; ++ls, t *= 0.5) {
      xn = (x + t * dir).cwiseMax(0.0).cwiseMin(1.0);
      fn = s.value_and_grad(xn, &gn);
      if (std::isfinite(fn) && fn >= f + 1e-4 * g.dot(xn - x) && fn >= f) {
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
    const Eigen::VectorXd sv = (xn - x).transpose();
    const Eigen::VectorXd yv = -(gn - g).transpose();  // BFGS on -f
    const double sy = sv.dot(yv);
    if (sy > 1e-12) {
      const double rho = 1.0 / sy;
      const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(d, d);
      H = (I - rho * sv * yv.transpose()) * H * (I - rho * yv * sv.transpose()) + rho * sv * sv.transpose();
    }
    const bool stalled = (fn - f) <= 1e-12 * std::max(1.0, std::abs(f));
    x = xn;
    g = gn;
    f = fn;
    if (stalled) {
      ++it;
      break;
    }
  }
  c.x = x;
  c.value = f;
  c.iterations = it;
  return c;
}

namespace detail {

inline bool same_point(const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b, double tol) {
  return (a - b).cwiseAbs().maxCoeff() <= tol;
}

inline std::vector<std::size_t> top_indices(const std::vector<double>& v, std::size_t k) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  k = std::min(k, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(), [&](std::size_t a, std::size_t b) {
    if (v[a] != v[b]) return v[a] > v[b];
    return a < b;
  });
  idx.resize(k);
  return idx;
}

}  // namespace detail

/// Ranked, deduplicated candidates in [0, 1]^d (best first). Observed points
/// are scored as candidates but never returned.
template <class Surface, class R>
std::vector<Candidate> propose_candidates(const Surface& s, const Eigen::MatrixXd& observed, int dims, R& rng,
                                          const ProposeConfig& cfg = {}) {
  if (dims < 1) throw DomainError("need at least one dimension");
  const Eigen::Index n_obs = observed.rows();
  Eigen::MatrixXd cand(cfg.candidates + n_obs, dims);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < cfg.candidates; ++i)
    for (int j = 0; j < dims; ++j) cand(i, j) = u(rng);
  if (n_obs) cand.bottomRows(n_obs) = observed;
  const auto vals = s.values(cand);
  const auto top = detail::top_indices(vals, static_cast<std::size_t>(std::max(cfg.top_k, 1)));
  std::vector<Candidate> refined;
  for (std::size_t i : top) {
    Candidate c = cfg.max_iterations > 0 ? refine(s, cand.row(static_cast<Eigen::Index>(i)), cfg)
                                         : Candidate{cand.row(static_cast<Eigen::Index>(i)), vals[i], vals[i], 0};
    refined.push_back(std::move(c));
  }
  std::stable_sort(refined.begin(), refined.end(), [](const Candidate& a, const Candidate& b) { return a.value > b.value; });
  std::vector<Candidate> out;
  for (auto& c : refined) {
    bool dup = false;
    for (const auto& o : out) dup = dup || detail::same_point(o.x, c.x, 1e-9);
    for (Eigen::Index i = 0; i < n_obs && !dup; ++i) dup = c.x == Eigen::RowVectorXd(observed.row(i));
    if (!dup) out.push_back(std::move(c));
  }
  // Fall back to unrefined random candidates if refinement collapsed onto observed points.
  for (std::size_t i = 0; out.empty() && i < static_cast<std::size_t>(cfg.candidates); ++i)
    out.push_back({cand.row(static_cast<Eigen::Index>(i)), vals[i], vals[i], 0});
  if (out.empty()) throw ExhaustedSpaceError("no unevaluated candidate found");
  return out;
}

/// Index of the best unevaluated pool row.
template <class Surface>
std::size_t propose_from_pool(const Surface& s, const Eigen::MatrixXd& pool_unit, const std::vector<bool>& evaluated) {
  std::vector<Eigen::Index> open;
  for (Eigen::Index i = 0; i < pool_unit.rows(); ++i)
    if (!evaluated[static_cast<std::size_t>(i)]) open.push_back(i);
  if (open.empty()) throw ExhaustedSpaceError("every pool point has been evaluated");
  Eigen::MatrixXd x(static_cast<Eigen::Index>(open.size()), pool_unit.cols());
  for (std::size_t k = 0; k < open.size(); ++k) x.row(static_cast<Eigen::Index>(k)) = pool_unit.row(open[k]);
  const auto v = s.values(x);
  std::size_t best = 0;
  for (std::size_t k = 1; k < v.size(); ++k)
    if (v[k] > v[best]) best = k;
  return static_cast<std::size_t>(open[best]);
}

}  // namespace pfnbo
