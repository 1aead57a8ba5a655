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

// Learned knowledge gradient. The network is first taught, in mean mode, the
// distribution of its own predictive means over uniform query locations;
// tau(D) is the 0.999 quantile of that distribution. In kg mode it then learns
// the distribution of tau(D + {(x, y)}) for y drawn with the dataset, and the
// acquisition is the mean of that distribution minus tau(D).

#include <cmath>
#include <memory>
#include <random>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Cholesky>

#include "pfnbo/errors.hpp"
#include "pfnbo/gp.hpp"
#include "pfnbo/pfn.hpp"
#include "pfnbo/stats.hpp"

namespace pfnbo {

inline constexpr double kTauQuantile = 0.999;

/// Upper 0.999 quantile of a mean-mode prediction.
inline double tau_of(const RiemannDistribution& mean_dist) { return mean_dist.icdf(kTauQuantile); }

inline double tau(const PfnModel& model, const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  if (model.config().style != StyleVocabulary::Kg) throw ConfigError("tau needs a model with the kg style vocabulary");
  const auto cond = model.condition(x, y, {StyleMode::Mean, std::nullopt});
  return tau_of(cond.predict_one(Eigen::RowVectorXd::Zero(x.cols())));
}

/// Learned KG at each query row: mean of the kg-mode prediction minus tau(D).
inline std::vector<double> learned_kg(const PfnModel& model, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                      const Eigen::MatrixXd& queries) {
  const double t = tau(model, x, y);
  const auto cond = model.condition(x, y, {StyleMode::Kg, std::nullopt});
  std::vector<double> out;
  for (const auto& d : cond.predict(queries)) out.push_back(d.mean() - t);
  return out;
}

struct KgStageConfig {
  OptimConfig optim{};
  double plain_fraction = 0.25;  // episodes replaying the original targets
  double mean_fraction = 0.25;   // kg stage only: episodes replaying mean-mode targets
};

namespace detail {

/// Means of the plain-mode predictions at fresh uniform query locations.
inline void to_mean_episode(const PfnModel& frozen, TrainingEpisode& e, Rng& rng) {
  e.query_x = uniform_inputs(static_cast<int>(e.target.size()), static_cast<int>(e.train_x.cols()), rng);
  const auto preds = frozen.condition(e.train_x, e.train_y).predict(e.query_x);
  for (std::size_t i = 0; i < preds.size(); ++i) e.target(static_cast<Eigen::Index>(i)) = preds[i].mean();
  e.style = {StyleMode::Mean, std::nullopt};
}

/// y' = tau(D + {(x_i, y_i)}) for every query pair of the episode.
inline void to_kg_episode(const PfnModel& frozen, TrainingEpisode& e) {
  const Eigen::Index n = e.train_x.rows();
  Eigen::MatrixXd x(n + 1, e.train_x.cols());
  Eigen::VectorXd y(n + 1);
  x.topRows(n) = e.train_x;
  y.head(n) = e.train_y;
  for (Eigen::Index i = 0; i < e.query_x.rows(); ++i) {
    x.row(n) = e.query_x.row(i);
    y(n) = e.target(i);
    e.target(i) = tau(frozen, x, y);
  }
  e.style = {StyleMode::Kg, std::nullopt};
}

}  // namespace detail

/// Batches for the mean stage. `frozen` supplies the plain-mode means.
inline BatchSource mean_head_source(BatchSource base, std::shared_ptr<const PfnModel> frozen, double plain_fraction) {
  return [base = std::move(base), frozen = std::move(frozen), plain_fraction](Rng& rng) {
    EpisodeData data = base(rng);
    std::bernoulli_distribution keep(plain_fraction);
    for (auto& e : data.episodes)
      if (!keep(rng)) detail::to_mean_episode(*frozen, e, rng);
    return data;
  };
}

/// Batches for the kg stage. `frozen` must already have a trained mean head.
inline BatchSource kg_head_source(BatchSource base, std::shared_ptr<const PfnModel> frozen, double plain_fraction,
                                  double mean_fraction) {
  return [base = std::move(base), frozen = std::move(frozen), plain_fraction, mean_fraction](Rng& rng) {
    EpisodeData data = base(rng);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (auto& e : data.episodes) {
      const double r = u(rng);
      if (r < plain_fraction) continue;
      if (r < plain_fraction + mean_fraction) detail::to_mean_episode(*frozen, e, rng);
      else detail::to_kg_episode(*frozen, e);
    }
    return data;
  };
}

namespace detail {

inline void check_kg_model(const PfnModel& m) {
  if (m.config().style != StyleVocabulary::Kg) throw ConfigError("mean and kg stages need the kg style vocabulary");
}

}  // namespace detail

/// Continues training `model` on mean-mode episodes built from a snapshot of itself.
inline TrainReport train_mean_head(PfnModel& model, const BatchSource& base, const KgStageConfig& cfg, Rng& rng,
                                   const TrainHooks& hooks = {}) {
  detail::check_kg_model(model);
  auto frozen = std::make_shared<const PfnModel>(model);
  return train(model, mean_head_source(base, frozen, cfg.plain_fraction), cfg.optim, rng, hooks);
}

/// Continues training `model` on kg-mode episodes; targets come from a snapshot
/// taken after the mean stage.
inline TrainReport train_kg_head(PfnModel& model, const BatchSource& base, const KgStageConfig& cfg, Rng& rng,
                                 const TrainHooks& hooks = {}) {
  detail::check_kg_model(model);
  auto frozen = std::make_shared<const PfnModel>(model);
  return train(model, kg_head_source(base, frozen, cfg.plain_fraction, cfg.mean_fraction), cfg.optim, rng, hooks);
}

// ---------------------------------------------------------------------------

struct McEstimate {
  double value = 0.0;
  double standard_error = 0.0;
};

/// Monte-Carlo KG for an exact GP. For each of `n_outcomes` observations y at
/// x, the maximal posterior mean over a candidate set is compared with the
/// current one. The candidates are `n_locations` uniform points, the observed
/// inputs and x itself; they are shared by all outcomes.
template <class R>
McEstimate mc_kg_oracle(const gp::GpPosterior& post, const Eigen::RowVectorXd& x, int n_outcomes, int n_locations, R& rng) {
  if (n_outcomes < 1 || n_locations < 0) throw DomainError("need at least one outcome and nonnegative locations");
  const auto& X = post.inputs();
  const int d = static_cast<int>(X.cols());
  if (x.size() != d) throw DomainError("query dimensionality differs from the GP inputs");
  const Eigen::Index m = n_locations + X.rows() + 1;
  Eigen::MatrixXd cand(m, d);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < n_locations; ++i)
    for (int j = 0; j < d; ++j) cand(i, j) = u(rng);
  cand.middleRows(n_locations, X.rows()) = X;
  cand.row(m - 1) = x;

  const auto& L = post.cholesky();
  const auto lower = L.triangularView<Eigen::Lower>();
  const Eigen::VectorXd alpha = L.transpose().triangularView<Eigen::Upper>().solve(lower.solve(post.outputs()));
  const Eigen::MatrixXd kc = gp::kernel_matrix(post.params(), X, cand);  // n x m
  const Eigen::VectorXd mu = kc.transpose() * alpha;
  const Eigen::MatrixXd vc = lower.solve(kc);
  // Posterior covariance between every candidate and x (the last candidate).
  const Eigen::VectorXd kx = gp::kernel_matrix(post.params(), cand, x).col(0);
  const Eigen::VectorXd cov = kx - vc.transpose() * vc.col(m - 1);
  const double var_y = std::max(cov(m - 1), 0.0) + post.params().noise;
  const double before = mu.maxCoeff();

  std::normal_distribution<double> z(0.0, 1.0);
  std::vector<double> gains(static_cast<std::size_t>(n_outcomes));
  for (auto& g : gains) {
    // Posterior mean after observing y = mu(x) + sqrt(var_y) z moves along cov / var_y.
    const double shift = z(rng) / std::sqrt(var_y);
    g = var_y > 0.0 ? (mu + cov * shift).maxCoeff() - before : 0.0;
  }
  return {stats::mean(gains), n_outcomes > 1 ? stats::standard_error(gains) : 0.0};
}

/// Per-iteration coin flip between EI and KG.
struct EiKgPolicy {
  double kg_probability = 0.5;

  bool use_kg(Rng& rng) const {
    if (!(kg_probability >= 0.0 && kg_probability <= 1.0)) throw ConfigError("kg probability must lie in [0, 1]");
    return std::bernoulli_distribution(kg_probability)(rng);
  }
};

}  // namespace pfnbo
