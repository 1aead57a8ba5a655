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

// Exact zero-mean Gaussian-process regression: RBF and ARD Matern-3/2
// kernels, Cholesky posterior, closed-form EI, and a MAP fit of kernel
// hyperparameters under Gamma / log-normal hyperpriors.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "pfnbo/errors.hpp"
#include "pfnbo/stats.hpp"

namespace pfnbo::gp {

enum class KernelKind { Rbf, Matern32 };

struct KernelParams {
  KernelKind kind = KernelKind::Rbf;
  std::vector<double> lengthscales{0.2};  // one entry (isotropic) or one per dimension
  double outputscale = 1.0;
  double noise = 1e-4;  // observation noise variance

  double lengthscale(Eigen::Index dim) const {
    return lengthscales.size() == 1 ? lengthscales.front() : lengthscales[static_cast<std::size_t>(dim)];
  }
};

/// Squared scaled distance sum_j ((a_j - b_j) / l_j)^2.
template <class A, class B>
double scaled_sq_dist(const KernelParams& p, const A& a, const B& b) {
  double r2 = 0.0;
  for (Eigen::Index j = 0; j < a.size(); ++j) {
    const double t = (a(j) - b(j)) / p.lengthscale(j);
    r2 += t * t;
  }
  return r2;
}

inline double kernel_from_sq_dist(const KernelParams& p, double r2) {
  if (p.kind == KernelKind::Rbf) return p.outputscale * std::exp(-0.5 * r2);
  const double sr = std::sqrt(3.0 * r2);
  return p.outputscale * (1.0 + sr) * std::exp(-sr);
}

inline double matern32(double r, double lengthscale, double outputscale) {
  const double s = std::sqrt(3.0) * r / lengthscale;
  return outputscale * (1.0 + s) * std::exp(-s);
}

template <class A, class B>
double kernel(const KernelParams& p, const A& a, const B& b) {
  return kernel_from_sq_dist(p, scaled_sq_dist(p, a, b));
}

/// Rows of X are points.
inline Eigen::MatrixXd kernel_matrix(const KernelParams& p, const Eigen::MatrixXd& x1, const Eigen::MatrixXd& x2) {
  Eigen::MatrixXd k(x1.rows(), x2.rows());
  for (Eigen::Index i = 0; i < x1.rows(); ++i)
    for (Eigen::Index j = 0; j < x2.rows(); ++j) k(i, j) = kernel(p, x1.row(i), x2.row(j));
  return k;
}

struct CholeskyResult {
  Eigen::MatrixXd lower;
  double jitter = 0.0;
};

/// Cholesky with diagonal jitter escalation: tries the matrix as given, then
/// adds 1e-10 * mean(diag), multiplying by 10 up to 1e-4 * mean(diag).
inline CholeskyResult cholesky_with_jitter(const Eigen::MatrixXd& k) {
  const Eigen::Index n = k.rows();
  const double scale = std::max(k.diagonal().mean(), std::numeric_limits<double>::min());
  for (double rel = 0.0; rel <= 1e-4 * (1 + 1e-9); rel = rel == 0.0 ? 1e-10 : rel * 10.0) {
    Eigen::MatrixXd kj = k;
    kj.diagonal().array() += rel * scale;
    Eigen::LLT<Eigen::MatrixXd> llt(kj);
    if (llt.info() == Eigen::Success) {
      Eigen::MatrixXd l = llt.matrixL();
      if (l.allFinite() && (n == 0 || l.diagonal().minCoeff() > 0.0)) return {std::move(l), rel * scale};
    }
  }
  throw CholeskyError("covariance matrix not positive definite after jitter escalation");
}

class GpPosterior {
 public:
  GpPosterior(KernelParams params, Eigen::MatrixXd x, Eigen::VectorXd y)
      : params_(std::move(params)), x_(std::move(x)), y_(std::move(y)) {
    if (x_.rows() == 0) throw DomainError("GP posterior needs at least one observation");
    Eigen::MatrixXd k = kernel_matrix(params_, x_, x_);
    k.diagonal().array() += params_.noise;
    chol_ = cholesky_with_jitter(k);
    alpha_ = chol_.lower.transpose().triangularView<Eigen::Upper>().solve(
        chol_.lower.triangularView<Eigen::Lower>().solve(y_));
  }

  const KernelParams& params() const { return params_; }
  const Eigen::MatrixXd& inputs() const { return x_; }
  const Eigen::VectorXd& outputs() const { return y_; }
  const Eigen::MatrixXd& cholesky() const { return chol_.lower; }

  /// Latent-function posterior (mean, variance) at x.
  template <class V>
  std::pair<double, double> predict(const V& x) const {
    Eigen::VectorXd ks(x_.rows());
    for (Eigen::Index i = 0; i < x_.rows(); ++i) ks(i) = kernel(params_, x_.row(i), x);
    const double mean = ks.dot(alpha_);
    const Eigen::VectorXd v = chol_.lower.triangularView<Eigen::Lower>().solve(ks);
    const double var = std::max(kernel(params_, x, x) - v.squaredNorm(), 0.0);
    return {mean, var};
  }

  /// Posterior predictive for a new noisy observation.
  template <class V>
  std::pair<double, double> predict_observation(const V& x) const {
    auto [m, v] = predict(x);
    return {m, v + params_.noise};
  }

  double log_marginal_likelihood() const {
    const double n = static_cast<double>(y_.size());
    return -0.5 * y_.dot(alpha_) - chol_.lower.diagonal().array().log().sum() -
           0.5 * n * std::log(2.0 * std::numbers::pi);
  }

 private:
  KernelParams params_;
  Eigen::MatrixXd x_;
  Eigen::VectorXd y_;
  CholeskyResult chol_;
  Eigen::VectorXd alpha_;
};

inline GpPosterior posterior(const KernelParams& p, const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  return GpPosterior(p, x, y);
}

/// Closed-form EI for maximization: sigma * (z Phi(z) + phi(z)), z = (mu - f*) / sigma.
inline double gaussian_ei(double mean, double variance, double f_star) {
  if (!(variance > 0.0)) return std::max(mean - f_star, 0.0);
  const double s = std::sqrt(variance);
  const double z = (mean - f_star) / s;
  return std::max(0.0, s * (z * stats::normal_cdf(z) + stats::normal_pdf(z)));
}

/// Gamma(shape, rate) and log-normal hyperpriors used by the Matern prior.
struct Hyperpriors {
  double outputscale_shape = 0.8452;
  double outputscale_rate = 0.3993;
  double lengthscale_shape = 1.2107;
  double lengthscale_rate = 1.5212;
  double log_noise_mean = -4.63;
  double log_noise_std = 0.5;
};

inline double log_gamma_pdf(double x, double shape, double rate) {
  return shape * std::log(rate) - std::lgamma(shape) + (shape - 1.0) * std::log(x) - rate * x;
}

struct MapFitConfig {
  int restarts = 10;
  int steps = 200;
  double learning_rate = 0.05;
  bool ard = true;
  double min_log = -9.0;  // clamp on log-parameters
  double max_log = 5.0;
};

struct MapFitResult {
  KernelParams params;
  double objective = -std::numeric_limits<double>::infinity();
  std::vector<double> start_objectives;
  int failed_restarts = 0;
};

namespace detail {

/// Log-space parameter vector: [log l_1..log l_m, log outputscale, log noise].
inline KernelParams unpack(KernelKind kind, const Eigen::VectorXd& theta) {
  KernelParams p;
  p.kind = kind;
  const Eigen::Index m = theta.size() - 2;
  p.lengthscales.resize(static_cast<std::size_t>(m));
  for (Eigen::Index j = 0; j < m; ++j) p.lengthscales[static_cast<std::size_t>(j)] = std::exp(theta(j));
  p.outputscale = std::exp(theta(m));
  p.noise = std::exp(theta(m + 1));
  return p;
}

/// Log marginal likelihood plus log hyperprior and its gradient in log-space.
inline double map_objective(KernelKind kind, const Hyperpriors& hp, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                            const Eigen::VectorXd& theta, Eigen::VectorXd* grad) {
  const KernelParams p = unpack(kind, theta);
  const Eigen::Index n = x.rows(), m = theta.size() - 2, d = x.cols();
  Eigen::MatrixXd k(n, n);
  std::vector<Eigen::MatrixXd> dk_dl(static_cast<std::size_t>(grad ? m : 0), Eigen::MatrixXd::Zero(n, n));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      const double r2 = scaled_sq_dist(p, x.row(i), x.row(j));
      const double kv = kernel_from_sq_dist(p, r2);
      k(i, j) = k(j, i) = kv;
      if (!grad) continue;
      // d k / d log l_c
      const double base = kind == KernelKind::Rbf ? kv : 3.0 * p.outputscale * std::exp(-std::sqrt(3.0 * r2));
      for (Eigen::Index c = 0; c < d; ++c) {
        const Eigen::Index slot = m == 1 ? 0 : c;
        const double t = (x(i, c) - x(j, c)) / p.lengthscale(c);
        dk_dl[static_cast<std::size_t>(slot)](i, j) += base * t * t;
      }
    }
  }
  Eigen::MatrixXd kn = k;
  kn.diagonal().array() += p.noise;
  Eigen::LLT<Eigen::MatrixXd> llt(kn);
  if (llt.info() != Eigen::Success) return -std::numeric_limits<double>::infinity();
  const Eigen::VectorXd alpha = llt.solve(y);
  const Eigen::MatrixXd lmat = llt.matrixL();
  double obj = -0.5 * y.dot(alpha) - lmat.diagonal().array().log().sum() - 0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
  for (Eigen::Index j = 0; j < m; ++j) obj += log_gamma_pdf(p.lengthscales[static_cast<std::size_t>(j)], hp.lengthscale_shape, hp.lengthscale_rate);
  obj += log_gamma_pdf(p.outputscale, hp.outputscale_shape, hp.outputscale_rate);
  const double z = (theta(m + 1) - hp.log_noise_mean) / hp.log_noise_std;
  obj += -0.5 * z * z - std::log(hp.log_noise_std * std::sqrt(2.0 * std::numbers::pi));
  if (!grad) return obj;

  const Eigen::MatrixXd w = alpha * alpha.transpose() - llt.solve(Eigen::MatrixXd::Identity(n, n));
  grad->resize(theta.size());
  for (Eigen::Index j = 0; j < m; ++j) {
    Eigen::MatrixXd& dk = dk_dl[static_cast<std::size_t>(j)];
    dk.triangularView<Eigen::StrictlyUpper>() = dk.transpose();
    const double l = p.lengthscales[static_cast<std::size_t>(j)];
    (*grad)(j) = 0.5 * w.cwiseProduct(dk).sum() + (hp.lengthscale_shape - 1.0) - hp.lengthscale_rate * l;
  }
  (*grad)(m) = 0.5 * w.cwiseProduct(k).sum() + (hp.outputscale_shape - 1.0) - hp.outputscale_rate * p.outputscale;
  (*grad)(m + 1) = 0.5 * w.trace() * p.noise - z / hp.log_noise_std;
  return obj;
}

}  // namespace detail

/// Objective (log marginal likelihood + log hyperprior) at the given parameters.
inline double map_objective(const KernelParams& p, const Hyperpriors& hp, const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  Eigen::VectorXd theta(static_cast<Eigen::Index>(p.lengthscales.size()) + 2);
  for (std::size_t j = 0; j < p.lengthscales.size(); ++j) theta(static_cast<Eigen::Index>(j)) = std::log(p.lengthscales[j]);
  theta(theta.size() - 2) = std::log(p.outputscale);
  theta(theta.size() - 1) = std::log(p.noise);
  return detail::map_objective(p.kind, hp, x, y, theta, nullptr);
}

/// Multi-restart MAP fit by Adam ascent in log-parameter space. Starting
/// points are drawn from the hyperpriors; the best visited point is kept.
template <class Rng>
MapFitResult fit_map(KernelKind kind, const Hyperpriors& hp, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                     Rng& rng, const MapFitConfig& cfg = {}) {
  if (x.rows() < 2) throw DomainError("MAP fit needs at least two observations");
  const Eigen::Index m = cfg.ard ? x.cols() : 1;
  MapFitResult best;
  std::gamma_distribution<double> g_len(hp.lengthscale_shape, 1.0 / hp.lengthscale_rate);
  std::gamma_distribution<double> g_out(hp.outputscale_shape, 1.0 / hp.outputscale_rate);
  std::normal_distribution<double> g_noise(hp.log_noise_mean, hp.log_noise_std);
  for (int r = 0; r < cfg.restarts; ++r) {
    Eigen::VectorXd theta(m + 2);
    for (Eigen::Index j = 0; j < m; ++j) theta(j) = std::log(std::max(g_len(rng), 1e-3));
    theta(m) = std::log(std::max(g_out(rng), 1e-3));
    theta(m + 1) = g_noise(rng);
    theta = theta.cwiseMax(cfg.min_log).cwiseMin(cfg.max_log);
    Eigen::VectorXd grad, mom = Eigen::VectorXd::Zero(m + 2), vel = Eigen::VectorXd::Zero(m + 2);
    double obj = detail::map_objective(kind, hp, x, y, theta, &grad);
    best.start_objectives.push_back(obj);
    if (!std::isfinite(obj)) {
      ++best.failed_restarts;
      continue;
    }
    Eigen::VectorXd run_best = theta;
    double run_best_obj = obj;
    for (int s = 1; s <= cfg.steps; ++s) {
      mom = 0.9 * mom + 0.1 * grad;
      vel = 0.999 * vel + 0.001 * grad.cwiseAbs2();
      const Eigen::VectorXd mh = mom / (1.0 - std::pow(0.9, s));
      const Eigen::VectorXd vh = vel / (1.0 - std::pow(0.999, s));
      theta += cfg.learning_rate * mh.cwiseQuotient((vh.cwiseSqrt().array() + 1e-8).matrix());
      theta = theta.cwiseMax(cfg.min_log).cwiseMin(cfg.max_log);
      obj = detail::map_objective(kind, hp, x, y, theta, &grad);
      if (!std::isfinite(obj)) break;
      if (obj > run_best_obj) {
        run_best_obj = obj;
        run_best = theta;
      }
    }
    if (run_best_obj > best.objective) {
      best.objective = run_best_obj;
      best.params = detail::unpack(kind, run_best);
    }
  }
  if (!std::isfinite(best.objective))
    throw Error("MAP fit failed: all " + std::to_string(cfg.restarts) + " restarts produced non-finite objectives");
  return best;
}

}  // namespace pfnbo::gp
