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

// Synthetic dataset priors for prior-fitting: a fixed-hyperparameter RBF GP,
// a Matern-3/2 GP with hyperpriors, and a random tanh MLP, plus the
// input-warping, spurious-dimension and user-prior extensions.

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <memory>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "pfnbo/errors.hpp"
#include "pfnbo/gp.hpp"
#include "pfnbo/warp.hpp"

namespace pfnbo {

using Rng = std::mt19937_64;

/// Feature matrix (rows are points, entries in [0, 1]) and outputs.
struct Dataset {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;

  int n() const { return static_cast<int>(x.rows()); }
  int d() const { return static_cast<int>(x.cols()); }

  void validate() const {
    if (x.rows() < 1) throw DomainError("dataset must contain at least one point");
    if (x.rows() != y.size()) throw DomainError("dataset X/y size mismatch");
    if ((x.array() < 0.0).any() || (x.array() > 1.0).any()) throw DomainError("dataset features outside [0, 1]");
    if (!y.allFinite()) throw DomainError("dataset outputs must be finite");
  }

  Eigen::Index argmax() const {
    Eigen::Index i = 0;
    y.maxCoeff(&i);
    return i;
  }
};

inline void write_csv(const Dataset& data, std::ostream& os) {
  for (int j = 0; j < data.d(); ++j) os << "x_" << j << ",";
  os << "y\n" << std::setprecision(17);
  for (int i = 0; i < data.n(); ++i) {
    for (int j = 0; j < data.d(); ++j) os << data.x(i, j) << ",";
    os << data.y(i) << "\n";
  }
}

template <class Rng_>
Eigen::MatrixXd uniform_inputs(int n, int d, Rng_& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::MatrixXd x(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) x(i, j) = u(rng);
  return x;
}

/// A distribution over functions on [0, 1]^d.
class Prior : public std::enable_shared_from_this<Prior> {
 public:
  virtual ~Prior() = default;

  /// Draws a fresh function and evaluates it (with noise) at the rows of x.
  virtual Eigen::VectorXd outputs(const Eigen::MatrixXd& x, Rng& rng) const = 0;

  /// Instance whose hyperparameters are shared by a group of datasets.
  virtual std::shared_ptr<const Prior> group_instance(Rng&) const { return shared_from_this(); }

  Dataset sample(int n, int d, Rng& rng) const {
    Dataset data;
    data.x = uniform_inputs(n, d, rng);
    data.y = outputs(data.x, rng);
    return data;
  }
};

using PriorPtr = std::shared_ptr<const Prior>;

namespace detail {

inline Eigen::VectorXd draw_gaussian(const gp::KernelParams& p, const Eigen::MatrixXd& x, Rng& rng) {
  Eigen::MatrixXd k = gp::kernel_matrix(p, x, x);
  k.diagonal().array() += p.noise;
  const auto chol = gp::cholesky_with_jitter(k);
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::VectorXd z(x.rows());
  for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = g(rng);
  return chol.lower * z;
}

}  // namespace detail

/// Zero-mean GP with a fixed RBF kernel.
class SimpleGpPrior : public Prior {
 public:
  explicit SimpleGpPrior(gp::KernelParams params) : params_(std::move(params)) {
    params_.kind = gp::KernelKind::Rbf;
    if (!(params_.outputscale > 0.0) || params_.noise < 0.0) throw ConfigError("invalid RBF prior scales");
    for (double l : params_.lengthscales)
      if (!(l > 0.0)) throw ConfigError("RBF lengthscale must be positive");
  }

  const gp::KernelParams& params() const { return params_; }

  Eigen::VectorXd outputs(const Eigen::MatrixXd& x, Rng& rng) const override {
    return detail::draw_gaussian(params_, x, rng);
  }

 private:
  gp::KernelParams params_;
};

inline Dataset sample_simple_gp(int n, int d, const gp::KernelParams& params, Rng& rng) {
  return SimpleGpPrior(params).sample(n, d, rng);
}

/// Matern-3/2 GP whose outputscale, per-dimension lengthscales and noise
/// variance are drawn per dataset from the hyperpriors.
class HeboPrior : public Prior {
 public:
  explicit HeboPrior(gp::Hyperpriors hp = {}) : hp_(hp) {}

  gp::KernelParams sample_params(int d, Rng& rng) const {
    std::gamma_distribution<double> out(hp_.outputscale_shape, 1.0 / hp_.outputscale_rate);
    std::gamma_distribution<double> len(hp_.lengthscale_shape, 1.0 / hp_.lengthscale_rate);
    std::normal_distribution<double> log_noise(hp_.log_noise_mean, hp_.log_noise_std);
    gp::KernelParams p;
    p.kind = gp::KernelKind::Matern32;
    p.outputscale = std::max(out(rng), 1e-8);
    p.lengthscales.resize(static_cast<std::size_t>(std::max(d, 1)));
    for (auto& l : p.lengthscales) l = std::max(len(rng), 1e-6);
    p.noise = std::exp(log_noise(rng));
    return p;
  }

  Eigen::VectorXd outputs(const Eigen::MatrixXd& x, Rng& rng) const override {
    return detail::draw_gaussian(sample_params(static_cast<int>(x.cols()), rng), x, rng);
  }

 private:
  gp::Hyperpriors hp_;
};

inline Dataset sample_hebo_prior(int n, int d, const gp::Hyperpriors& hp, Rng& rng) {
  return HeboPrior(hp).sample(n, d, rng);
}

struct BnnPriorConfig {
  int min_layers = 8, max_layers = 15;
  int min_hidden = 36, max_hidden = 150;
  double min_weight_std = 0.089, max_weight_std = 0.193;
  double zero_probability = 0.145;
  double min_activation_noise = 0.0003, max_activation_noise = 0.0014;
  double min_output_noise = 0.0004, max_output_noise = 0.0013;

  void validate() const {
    if (min_layers < 1 || max_layers < min_layers) throw ConfigError("invalid BNN layer range");
    if (min_hidden < 1 || max_hidden < min_hidden) throw ConfigError("invalid BNN width range");
    if (min_weight_std < 0 || max_weight_std < min_weight_std) throw ConfigError("invalid BNN weight std range");
    if (!(zero_probability >= 0.0 && zero_probability < 1.0)) throw ConfigError("zero probability must be in [0, 1)");
  }

  /// Factor applied to surviving weights so their variance is unchanged.
  double survivor_scale() const { return 1.0 / std::sqrt(1.0 - zero_probability); }
};

/// Architecture and noise levels of one sampled network.
struct BnnHyper {
  int layers = 8;  // number of linear maps
  int hidden = 64;
  double weight_std = 0.1;
  double activation_noise = 0.0;
  double output_noise = 0.0;
};

/// Random bias-free tanh MLP; weights are redrawn per dataset.
class BnnPrior : public Prior {
 public:
  explicit BnnPrior(BnnPriorConfig cfg = {}, std::optional<BnnHyper> fixed = std::nullopt)
      : cfg_(cfg), fixed_(fixed) {
    cfg_.validate();
  }

  BnnHyper sample_hyper(Rng& rng) const {
    BnnHyper h;
    h.layers = std::uniform_int_distribution<int>(cfg_.min_layers, cfg_.max_layers)(rng);
    h.hidden = std::uniform_int_distribution<int>(cfg_.min_hidden, cfg_.max_hidden)(rng);
    h.weight_std = std::uniform_real_distribution<double>(cfg_.min_weight_std, cfg_.max_weight_std)(rng);
    h.activation_noise = std::uniform_real_distribution<double>(cfg_.min_activation_noise, cfg_.max_activation_noise)(rng);
    h.output_noise = std::uniform_real_distribution<double>(cfg_.min_output_noise, cfg_.max_output_noise)(rng);
    return h;
  }

  std::shared_ptr<const Prior> group_instance(Rng& rng) const override {
    return std::make_shared<BnnPrior>(cfg_, fixed_ ? *fixed_ : sample_hyper(rng));
  }

  /// Weight matrices of one network (input -> hidden ... -> 1).
  std::vector<Eigen::MatrixXd> sample_weights(const BnnHyper& h, int d, Rng& rng) const {
    std::normal_distribution<double> g(0.0, 1.0);
    std::bernoulli_distribution drop(cfg_.zero_probability);
    const double keep_scale = cfg_.survivor_scale();
    std::vector<Eigen::MatrixXd> ws;
    int in = d;
    for (int l = 0; l < h.layers; ++l) {
      const int out = l + 1 == h.layers ? 1 : h.hidden;
      Eigen::MatrixXd w(in, out);
      for (Eigen::Index i = 0; i < w.size(); ++i) {
        const double v = h.weight_std * g(rng);
        w.data()[i] = drop(rng) ? 0.0 : v * keep_scale;
      }
      ws.push_back(std::move(w));
      in = out;
    }
    return ws;
  }

  Eigen::VectorXd evaluate(const std::vector<Eigen::MatrixXd>& ws, const BnnHyper& h, const Eigen::MatrixXd& x,
                           Rng& rng) const {
    std::normal_distribution<double> g(0.0, 1.0);
    Eigen::MatrixXd act = x;
    for (std::size_t l = 0; l < ws.size(); ++l) {
      Eigen::MatrixXd pre = act * ws[l];
      if (l + 1 == ws.size()) {
        act = std::move(pre);
        break;
      }
      for (Eigen::Index i = 0; i < pre.size(); ++i) pre.data()[i] += h.activation_noise * g(rng);
      act = pre.array().tanh().matrix();
    }
    Eigen::VectorXd y = act.col(0);
    for (Eigen::Index i = 0; i < y.size(); ++i) y(i) += h.output_noise * g(rng);
    return y;
  }

  Eigen::VectorXd outputs(const Eigen::MatrixXd& x, Rng& rng) const override {
    const BnnHyper h = fixed_ ? *fixed_ : sample_hyper(rng);
    const auto ws = sample_weights(h, static_cast<int>(x.cols()), rng);
    return evaluate(ws, h, x, rng);
  }

  const BnnPriorConfig& config() const { return cfg_; }

 private:
  BnnPriorConfig cfg_;
  std::optional<BnnHyper> fixed_;
};

inline Dataset sample_bnn_prior(int n, int d, const BnnPriorConfig& cfg, Rng& rng) {
  return BnnPrior(cfg).sample(n, d, rng);
}

/// Draws per-feature Kumaraswamy parameters with log a ~ N(0, c1_std),
/// log b ~ N(0, c2_std) and warps x with them.
inline Eigen::MatrixXd apply_prior_warp(const Eigen::MatrixXd& x, double c1_std, double c2_std, Rng& rng,
                                        WarpParams* used = nullptr) {
  std::normal_distribution<double> g1(0.0, c1_std), g2(0.0, c2_std);
  WarpParams w;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    w.a.push_back(std::exp(g1(rng)));
    w.b.push_back(std::exp(g2(rng)));
  }
  if (used) *used = w;
  return w.apply(x);
}

/// Feeds prior-warped inputs to the wrapped generator.
class WarpedInputs : public Prior {
 public:
  WarpedInputs(PriorPtr inner, double c1_std = 0.976, double c2_std = 0.8003)
      : inner_(std::move(inner)), c1_(c1_std), c2_(c2_std) {}

  Eigen::VectorXd outputs(const Eigen::MatrixXd& x, Rng& rng) const override {
    const Eigen::MatrixXd xw = apply_prior_warp(x, c1_, c2_, rng);
    return inner_->outputs(xw, rng);
  }

  PriorPtr group_instance(Rng& rng) const override {
    return std::make_shared<WarpedInputs>(inner_->group_instance(rng), c1_, c2_);
  }

 private:
  PriorPtr inner_;
  double c1_, c2_;
};

/// Marks floor(fraction * d) columns (randomized rounding) as irrelevant:
/// the wrapped generator never sees them.
class SpuriousDims : public Prior {
 public:
  SpuriousDims(PriorPtr inner, double fraction) : inner_(std::move(inner)), fraction_(fraction) {
    if (!(fraction >= 0.0 && fraction < 1.0)) throw ConfigError("spurious fraction must be in [0, 1)");
  }

  double fraction() const { return fraction_; }

  std::vector<bool> draw_mask(int d, Rng& rng) const {
    std::vector<bool> mask(static_cast<std::size_t>(d), false);
    if (fraction_ == 0.0) return mask;
    const double target = fraction_ * d;
    int count = static_cast<int>(std::floor(target));
    if (std::uniform_real_distribution<double>(0.0, 1.0)(rng) < target - count) ++count;
    std::vector<int> idx(static_cast<std::size_t>(d));
    for (int j = 0; j < d; ++j) idx[static_cast<std::size_t>(j)] = j;
    std::shuffle(idx.begin(), idx.end(), rng);
    for (int k = 0; k < count; ++k) mask[static_cast<std::size_t>(idx[static_cast<std::size_t>(k)])] = true;
    return mask;
  }

  /// Outputs given an explicit mask; only unmasked columns reach the generator.
  Eigen::VectorXd outputs_with_mask(const Eigen::MatrixXd& x, const std::vector<bool>& mask, Rng& rng) const {
    std::vector<Eigen::Index> keep;
    for (Eigen::Index j = 0; j < x.cols(); ++j)
      if (!mask[static_cast<std::size_t>(j)]) keep.push_back(j);
    Eigen::MatrixXd xr(x.rows(), static_cast<Eigen::Index>(keep.size()));
    for (std::size_t k = 0; k < keep.size(); ++k) xr.col(static_cast<Eigen::Index>(k)) = x.col(keep[k]);
    return inner_->outputs(xr, rng);
  }

  Eigen::VectorXd outputs(const Eigen::MatrixXd& x, Rng& rng) const override {
    if (fraction_ == 0.0) return inner_->outputs(x, rng);
    const auto mask = draw_mask(static_cast<int>(x.cols()), rng);
    return outputs_with_mask(x, mask, rng);
  }

  PriorPtr group_instance(Rng& rng) const override {
    return std::make_shared<SpuriousDims>(inner_->group_instance(rng), fraction_);
  }

 private:
  PriorPtr inner_;
  double fraction_;
};

inline PriorPtr add_spurious_dims(PriorPtr sampler, double fraction) {
  if (fraction == 0.0) return sampler;
  return std::make_shared<SpuriousDims>(std::move(sampler), fraction);
}

// ---------------------------------------------------------------------------
// User priors over the optimum location.

struct Interval {
  double lo = 0.0;
  double hi = 1.0;
  bool contains(double v) const { return v >= lo && v <= hi; }
  bool operator==(const Interval&) const = default;
};

/// {[i/k, (i+1)/k] : k = 1..5, i = 0..k-1}, 15 intervals ordered by k then i.
inline const std::vector<Interval>& interval_family() {
  static const std::vector<Interval> family = [] {
    std::vector<Interval> f;
    for (int k = 1; k <= 5; ++k)
      for (int i = 0; i < k; ++i) f.push_back({static_cast<double>(i) / k, static_cast<double>(i + 1) / k});
    return f;
  }();
  return family;
}

struct DimPrior {
  Interval interval;
  double rho = 0.0;
};

/// Per-dimension interval and confidence; std::nullopt means "no prior".
struct UserPriorSpec {
  std::vector<std::optional<DimPrior>> dims;

  void validate() const {
    for (const auto& d : dims) {
      if (!d) continue;
      if (!(d->interval.lo >= 0.0 && d->interval.lo < d->interval.hi && d->interval.hi <= 1.0))
        throw DomainError("user prior interval must satisfy 0 <= lo < hi <= 1");
      if (!(d->rho >= 0.0 && d->rho <= 1.0)) throw DomainError("user prior confidence must lie in [0, 1]");
    }
  }
};

/// Samples a family index: with probability rho uniformly among the intervals
/// containing `m`, otherwise from `marginal` (weights over the family).
inline std::size_t sample_interval(double m, double rho, std::span<const double> marginal, Rng& rng) {
  const auto& fam = interval_family();
  std::uniform_real_distribution<double> u(0.0, 1.0);
  if (u(rng) < rho) {
    std::vector<std::size_t> containing;
    for (std::size_t i = 0; i < fam.size(); ++i)
      if (fam[i].contains(m)) containing.push_back(i);
    return containing[std::uniform_int_distribution<std::size_t>(0, containing.size() - 1)(rng)];
  }
  std::discrete_distribution<std::size_t> pick(marginal.begin(), marginal.end());
  return pick(rng);
}

inline std::vector<double> uniform_interval_marginal() { return std::vector<double>(interval_family().size(), 1.0); }

struct UserPriorTask {
  Dataset data;
  UserPriorSpec spec;
  Eigen::VectorXd optimum;  // argmax input of the dataset
  double rho = 0.0;
};

/// Samples D from `base`, takes its best input as the optimum, draws
/// rho ~ U(0, 1) and one interval per dimension.
inline UserPriorTask sample_user_prior_task(const Prior& base, int n, int d, Rng& rng,
                                            std::span<const double> marginal = {}) {
  const std::vector<double> uniform = uniform_interval_marginal();
  if (marginal.empty()) marginal = uniform;
  UserPriorTask t;
  t.data = base.sample(n, d, rng);
  t.optimum = t.data.x.row(t.data.argmax()).transpose();
  t.rho = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  for (int j = 0; j < d; ++j) {
    const std::size_t idx = sample_interval(t.optimum(j), t.rho, marginal, rng);
    t.spec.dims.push_back(DimPrior{interval_family()[idx], t.rho});
  }
  return t;
}

// ---------------------------------------------------------------------------
// Prior configuration and training batches.

enum class PriorKind { SimpleGp, Hebo, Bnn };

struct PriorConfig {
  PriorKind kind = PriorKind::SimpleGp;
  gp::KernelParams simple{gp::KernelKind::Rbf, {0.2}, 1.0, 1e-4};
  gp::Hyperpriors hebo{};
  BnnPriorConfig bnn{};
  double spurious_fraction = 0.0;
  bool prior_warp = false;
  double warp_c1_std = 0.976;
  double warp_c2_std = 0.8003;
  bool user_prior = false;
  double no_prior_probability = 0.25;  // per dimension, user-prior mode only
  int min_dims = 1;
  int max_dims = 18;
  int group_size = 8;  // datasets sharing one hyperparameter draw

  void validate() const {
    if (min_dims < 1 || max_dims < min_dims) throw ConfigError("invalid dimension range");
    if (group_size < 1) throw ConfigError("group size must be >= 1");
    if (!(no_prior_probability >= 0.0 && no_prior_probability <= 1.0)) throw ConfigError("invalid no-prior probability");
    bnn.validate();
  }
};

inline PriorPtr make_prior(const PriorConfig& cfg) {
  cfg.validate();
  PriorPtr base;
  switch (cfg.kind) {
    case PriorKind::SimpleGp: base = std::make_shared<SimpleGpPrior>(cfg.simple); break;
    case PriorKind::Hebo: base = std::make_shared<HeboPrior>(cfg.hebo); break;
    case PriorKind::Bnn: base = std::make_shared<BnnPrior>(cfg.bnn); break;
  }
  if (cfg.prior_warp) base = std::make_shared<WarpedInputs>(base, cfg.warp_c1_std, cfg.warp_c2_std);
  return add_spurious_dims(base, cfg.spurious_fraction);
}

/// Zero-pads features to `capacity` columns and scales the real ones by capacity/d.
inline Eigen::MatrixXd pad_features(const Eigen::MatrixXd& x, int capacity) {
  if (x.cols() > capacity) throw CapacityError("dataset has more features than the model capacity");
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(x.rows(), capacity);
  if (x.cols() > 0) out.leftCols(x.cols()) = x * (static_cast<double>(capacity) / static_cast<double>(x.cols()));
  return out;
}

struct BatchShape {
  int min_train = 1;
  int max_train = 60;
  int test_points = 16;
};

struct TrainingSample {
  Dataset data;  // n_train + n_test rows; the first n_train are the context
  std::optional<UserPriorSpec> user_prior;
};

struct TrainingBatch {
  int n_train = 0;
  int n_test = 0;
  std::vector<TrainingSample> samples;
};

/// Draws one batch: shared split, per-dataset dimensionality, hyperparameters
/// shared within groups of `group_size` datasets.
inline TrainingBatch sample_training_batch(const PriorConfig& cfg, const Prior& prior, int batch_size,
                                           const BatchShape& shape, Rng& rng) {
  TrainingBatch batch;
  batch.n_train = std::uniform_int_distribution<int>(shape.min_train, shape.max_train)(rng);
  batch.n_test = shape.test_points;
  const int n = batch.n_train + batch.n_test;
  std::uniform_int_distribution<int> dims(cfg.min_dims, cfg.max_dims);
  std::bernoulli_distribution blank(cfg.no_prior_probability);
  PriorPtr group;
  for (int b = 0; b < batch_size; ++b) {
    if (b % cfg.group_size == 0) group = prior.group_instance(rng);
    const int d = dims(rng);
    TrainingSample s;
    if (cfg.user_prior) {
      auto task = sample_user_prior_task(*group, n, d, rng);
      for (auto& dim : task.spec.dims)
        if (blank(rng)) dim.reset();
      s.data = std::move(task.data);
      s.user_prior = std::move(task.spec);
    } else {
      s.data = group->sample(n, d, rng);
    }
    batch.samples.push_back(std::move(s));
  }
  return batch;
}

}  // namespace pfnbo
