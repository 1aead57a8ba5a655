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

// Inference-time transforms: unit-cube scaling of the search space, a
// Yeo-Johnson output transform and Kumaraswamy input warps fitted through
// the network by re-evaluation likelihood.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "pfnbo/errors.hpp"
#include "pfnbo/pfn.hpp"
#include "pfnbo/warp.hpp"

namespace pfnbo {

// ---------------------------------------------------------------------------
// Unit cube

/// Per-dimension affine map [lo, hi] -> [0, 1]. A dimension with lo == hi is
/// pinned to 0.5.
struct UnitCubeMap {
  std::vector<double> lo, hi;

  UnitCubeMap() = default;
  UnitCubeMap(std::vector<double> lo_, std::vector<double> hi_) : lo(std::move(lo_)), hi(std::move(hi_)) {
    if (lo.size() != hi.size()) throw DomainError("bound vectors differ in length");
    for (std::size_t j = 0; j < lo.size(); ++j)
      if (!std::isfinite(lo[j]) || !std::isfinite(hi[j]) || hi[j] < lo[j]) throw DomainError("invalid bounds");
  }

  int dims() const { return static_cast<int>(lo.size()); }
  bool degenerate(std::size_t j) const { return hi[j] == lo[j]; }

  std::vector<std::size_t> degenerate_dims() const {
    std::vector<std::size_t> out;
    for (std::size_t j = 0; j < lo.size(); ++j)
      if (degenerate(j)) out.push_back(j);
    return out;
  }

  Eigen::RowVectorXd to_unit(const Eigen::RowVectorXd& x) const {
    Eigen::RowVectorXd u(x.size());
    for (Eigen::Index j = 0; j < x.size(); ++j) {
      const auto k = static_cast<std::size_t>(j);
      u(j) = degenerate(k) ? 0.5 : (x(j) - lo[k]) / (hi[k] - lo[k]);
    }
    return u;
  }

  Eigen::RowVectorXd from_unit(const Eigen::RowVectorXd& u) const {
    Eigen::RowVectorXd x(u.size());
    for (Eigen::Index j = 0; j < u.size(); ++j) {
      const auto k = static_cast<std::size_t>(j);
      x(j) = degenerate(k) ? lo[k] : std::clamp(lo[k] + u(j) * (hi[k] - lo[k]), lo[k], hi[k]);
    }
    return x;
  }

  Eigen::MatrixXd to_unit(const Eigen::MatrixXd& x) const {
    Eigen::MatrixXd u(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) u.row(i) = to_unit(Eigen::RowVectorXd(x.row(i)));
    return u;
  }
};

// ---------------------------------------------------------------------------
// Output transform

inline double yeo_johnson(double y, double lambda) {
  if (y >= 0.0) {
    if (std::abs(lambda) < 1e-12) return std::log1p(y);
    return std::expm1(lambda * std::log1p(y)) / lambda;
  }
  if (std::abs(lambda - 2.0) < 1e-12) return -std::log1p(-y);
  return -std::expm1((2.0 - lambda) * std::log1p(-y)) / (2.0 - lambda);
}

inline double yeo_johnson_inverse(double t, double lambda) {
  if (t >= 0.0) {
    if (std::abs(lambda) < 1e-12) return std::expm1(t);
    return std::expm1(std::log1p(lambda * t) / lambda);
  }
  if (std::abs(lambda - 2.0) < 1e-12) return -std::expm1(-t);
  return -std::expm1(std::log1p(-(2.0 - lambda) * t) / (2.0 - lambda));
}

/// Yeo-Johnson profile log-likelihood of lambda for already-standardized z.
inline double yeo_johnson_log_likelihood(const Eigen::VectorXd& z, double lambda) {
  const double n = static_cast<double>(z.size());
  Eigen::VectorXd t(z.size());
  double jac = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    t(i) = yeo_johnson(z(i), lambda);
    jac += std::copysign(1.0, z(i)) * std::log1p(std::abs(z(i)));
  }
  const double var = (t.array() - t.mean()).square().sum() / n;
  if (!(var > 0.0) || !std::isfinite(var)) return -std::numeric_limits<double>::infinity();
  return -0.5 * n * std::log(var) + (lambda - 1.0) * jac;
}

/// y -> standardize -> Yeo-Johnson(lambda) -> standardize. Monotone increasing.
struct OutputTransform {
  double lambda = 1.0;
  double pre_mean = 0.0, pre_scale = 1.0;
  double post_mean = 0.0, post_scale = 1.0;
  double y_min = 0.0, y_max = 0.0;
  bool degenerate = false;  // all observations equal: shift only

  double apply(double y) const {
    if (degenerate) return y - pre_mean;
    return (yeo_johnson((y - pre_mean) / pre_scale, lambda) - post_mean) / post_scale;
  }

  double invert(double t) const {
    if (degenerate) return t + pre_mean;
    return yeo_johnson_inverse(t * post_scale + post_mean, lambda) * pre_scale + pre_mean;
  }

  Eigen::VectorXd apply(const Eigen::VectorXd& y) const {
    Eigen::VectorXd out(y.size());
    for (Eigen::Index i = 0; i < y.size(); ++i) out(i) = apply(y(i));
    return out;
  }
};

inline double population_std(const Eigen::VectorXd& v) {
  return std::sqrt((v.array() - v.mean()).square().sum() / static_cast<double>(v.size()));
}

/// Golden-section search for the maximum of f on [lo, hi].
template <class F>
double golden_section_max(F&& f, double lo, double hi, double tol = 1e-6) {
  const double g = 0.5 * (std::sqrt(5.0) - 1.0);
  double a = lo, b = hi;
  double c = b - g * (b - a), d = a + g * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > tol) {
    if (fc >= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - g * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + g * (b - a);
      fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

/// Fits lambda in [-2, 2] by maximum likelihood. `fixed_lambda` skips the search.
inline OutputTransform fit_output_transform(const Eigen::VectorXd& y, std::optional<double> fixed_lambda = std::nullopt) {
  if (y.size() < 1) throw DomainError("output transform needs observations");
  if (!y.allFinite()) throw DomainError("observations must be finite");
  OutputTransform t;
  t.y_min = y.minCoeff();
  t.y_max = y.maxCoeff();
  t.pre_mean = y.mean();
  const double sd = population_std(y);
  if (t.y_min == t.y_max || !(sd > 0.0)) {
    t.degenerate = true;
    return t;
  }
  t.pre_scale = sd;
  const Eigen::VectorXd z = (y.array() - t.pre_mean) / sd;
  t.lambda = fixed_lambda ? *fixed_lambda
                          : golden_section_max([&](double l) { return yeo_johnson_log_likelihood(z, l); }, -2.0, 2.0);
  Eigen::VectorXd tz(z.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) tz(i) = yeo_johnson(z(i), t.lambda);
  t.post_mean = tz.mean();
  t.post_scale = population_std(tz);
  if (!(t.post_scale > 0.0)) t.post_scale = 1.0;
  return t;
}

// ---------------------------------------------------------------------------
// Warp fitting

/// d w / d log a and d w / d log b of the Kumaraswamy CDF at x.
inline std::pair<double, double> kumaraswamy_log_param_grads(double x, double a, double b) {
  if (x <= 0.0 || x >= 1.0) return {0.0, 0.0};
  const double xa = std::pow(x, a);
  const double om = 1.0 - xa;
  if (om <= 0.0) return {0.0, 0.0};
  const double da = b * std::pow(om, b - 1.0) * xa * std::log(x);
  const double db = -std::pow(om, b) * std::log(om);
  return {a * da, b * db};
}

struct WarpFitConfig {
  int restarts = 10;
  int steps = 50;
  double learning_rate = 0.1;
  double min_log = -4.0;
  double max_log = 4.0;
};

struct WarpFitResult {
  WarpParams params;
  double objective = 0.0;
  double identity_objective = 0.0;
  bool ok = true;
  std::string status = "ok";
};

/// Re-evaluation log-likelihood sum_i log q(y_i | w(x_i), {(w(x_j), y_j)})
/// and, optionally, its gradient w.r.t. (log a_1..log a_d, log b_1..log b_d).
inline double warp_objective(const PfnModel& model, const Dataset& data, const WarpParams& w, const StyleInput& style,
                             Eigen::VectorXd* grad = nullptr) {
  const int d = data.d(), n = data.n();
  EpisodeData ep;
  TrainingEpisode e;
  e.train_x = w.apply(data.x);
  e.train_y = data.y;
  e.query_x = e.train_x;
  e.target = data.y;
  e.style = style;
  ep.episodes.push_back(std::move(e));
  const auto& net = *model.inference_net();
  const auto b = detail::encode<double>(model.config(), ep);
  nn::ContextCache<double> c;
  nn::QueryCache<double> q;
  net.forward(b, c, q, false);
  nn::Mat<double> dlogits;
  const double mean_nll = detail::target_loss(*model.layout(), ep, q.logits, grad ? &dlogits : nullptr);
  const double obj = -mean_nll * n;
  if (!grad) return obj;
  auto scratch = net.zeros_like();
  nn::Mat<double> dtrain, dquery;
  net.backward(b, c, q, dlogits, scratch, &dtrain, &dquery);
  const double sc = detail::feature_scale(model.config().features, d);
  grad->setZero(2 * d);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) {
      // objective = -n * mean loss
      const double dw = -n * (dtrain(i, j) + dquery(i, j)) * sc;
      const auto [ga, gb] = kumaraswamy_log_param_grads(data.x(i, j), w.a[static_cast<std::size_t>(j)],
                                                        w.b[static_cast<std::size_t>(j)]);
      (*grad)(j) += dw * ga;
      (*grad)(d + j) += dw * gb;
    }
  }
  return obj;
}

/// Maximizes the re-evaluation likelihood over per-feature (log a, log b) in
/// [min_log, max_log] by Adam ascent from the identity plus random starts.
/// Never returns parameters scoring below the identity warp.
inline WarpFitResult fit_warp(const PfnModel& model, const Dataset& data, Rng& rng, const WarpFitConfig& cfg = {},
                              const StyleInput& style = {}) {
  if (data.n() < 1) throw DomainError("warp fit needs observations");
  const int d = data.d();
  WarpFitResult res;
  res.params = WarpParams::identity(d);
  try {
    res.identity_objective = warp_objective(model, data, res.params, style);
  } catch (const Error& e) {
    res.ok = false;
    res.status = std::string("identity objective failed: ") + e.what();
    return res;
  }
  res.objective = res.identity_objective;
  auto unpack = [d](const Eigen::VectorXd& th) {
    WarpParams w;
    for (int j = 0; j < d; ++j) {
      w.a.push_back(std::exp(th(j)));
      w.b.push_back(std::exp(th(d + j)));
    }
    return w;
  };
  std::normal_distribution<double> g(0.0, 1.0);
  int failures = 0;
  for (int r = 0; r < cfg.restarts; ++r) {
    Eigen::VectorXd th = Eigen::VectorXd::Zero(2 * d);
    if (r > 0)
      for (Eigen::Index k = 0; k < th.size(); ++k) th(k) = std::clamp(g(rng), cfg.min_log, cfg.max_log);
    Eigen::VectorXd m = Eigen::VectorXd::Zero(2 * d), v = Eigen::VectorXd::Zero(2 * d), grad;
    for (int s = 1; s <= cfg.steps; ++s) {
      const WarpParams w = unpack(th);
      double obj;
      try {
        obj = warp_objective(model, data, w, style, &grad);
      } catch (const Error&) {
        ++failures;
        break;
      }
      if (!std::isfinite(obj) || !grad.allFinite()) {
        ++failures;
        break;
      }
      if (obj > res.objective) {
        res.objective = obj;
        res.params = w;
      }
      m = 0.9 * m + 0.1 * grad;
      v = 0.999 * v + 0.001 * grad.cwiseAbs2();
      const Eigen::VectorXd mh = m / (1.0 - std::pow(0.9, s));
      const Eigen::VectorXd vh = v / (1.0 - std::pow(0.999, s));
      th += cfg.learning_rate * mh.cwiseQuotient((vh.cwiseSqrt().array() + 1e-8).matrix());
      th = th.cwiseMax(cfg.min_log).cwiseMin(cfg.max_log);
    }
  }
  if (failures == cfg.restarts && cfg.restarts > 0) {
    res.ok = false;
    res.status = "all restarts failed; identity warp kept";
  }
  return res;
}

}  // namespace pfnbo
