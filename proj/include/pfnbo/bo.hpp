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

// Bayesian-optimization loop: initial design, per-iteration unit-cube
// mapping and output transform, surrogate proposal, evaluation, and the
// resulting trajectory.

#include <cmath>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <limits>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <boost/random/sobol.hpp>
#include <json.hpp>

#include "pfnbo/acqopt.hpp"
#include "pfnbo/errors.hpp"
#include "pfnbo/gp.hpp"
#include "pfnbo/kg.hpp"
#include "pfnbo/pfn.hpp"
#include "pfnbo/transforms.hpp"

namespace pfnbo {

enum class InitDesign { SobolD, InitMin, InitMid };

inline InitDesign parse_init_design(const std::string& s) {
  if (s == "sobol-d") return InitDesign::SobolD;
  if (s == "init-min") return InitDesign::InitMin;
  if (s == "init-mid") return InitDesign::InitMid;
  throw ConfigError("unknown initial design '" + s + "'");
}

/// d-dimensional Sobol points with a random digital shift, in [0, 1)^d.
template <class R>
Eigen::MatrixXd sobol_points(int n, int d, R& rng) {
  boost::random::sobol engine(static_cast<std::size_t>(d));
  std::uniform_int_distribution<std::uint64_t> bits;
  std::vector<std::uint64_t> shift(static_cast<std::size_t>(d));
  for (auto& s : shift) s = bits(rng);
  Eigen::MatrixXd out(n, d);
  // Boost starts after the origin; put it back so every power-of-two prefix is a net.
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) {
      const std::uint64_t raw = i == 0 ? 0 : static_cast<std::uint64_t>(engine());
      const std::uint64_t v = raw ^ shift[static_cast<std::size_t>(j)];
      out(i, j) = static_cast<double>(v >> 11) * 0x1.0p-53;
    }
  return out;
}

/// Initial points in the unit cube of `space`.
template <class R>
Eigen::MatrixXd initial_design(const SearchSpace& space, InitDesign kind, R& rng) {
  const int d = space.size();
  switch (kind) {
    case InitDesign::SobolD: return sobol_points(d, d, rng);
    case InitDesign::InitMin: return Eigen::MatrixXd::Zero(1, d);
    case InitDesign::InitMid: return Eigen::MatrixXd::Constant(1, d, 0.5);
  }
  return {};
}

/// Observations as seen by a proposer: unit-cube inputs, model-space outputs.
struct BoState {
  const SearchSpace& space;
  const Eigen::MatrixXd& x_unit;
  const Eigen::VectorXd& y_model;
  int iteration = 0;
};

class Proposer {
 public:
  virtual ~Proposer() = default;
  virtual std::string name() const = 0;
  /// Ranked candidate points in the unit cube, best first.
  virtual std::vector<Eigen::RowVectorXd> propose(const BoState& s, Rng& rng) = 0;
  /// Index of the chosen unevaluated pool row.
  virtual std::size_t propose_pool(const BoState& s, const Eigen::MatrixXd& pool_unit, const std::vector<bool>& evaluated,
                                   Rng& rng) = 0;
  /// Acquisition used by the most recent proposal.
  virtual std::string last_acquisition() const { return "random"; }
};

class RandomProposer : public Proposer {
 public:
  std::string name() const override { return "random"; }
  std::vector<Eigen::RowVectorXd> propose(const BoState& s, Rng& rng) override {
    return {uniform_inputs(1, s.space.size(), rng).row(0)};
  }
  std::size_t propose_pool(const BoState&, const Eigen::MatrixXd& pool_unit, const std::vector<bool>& evaluated,
                           Rng& rng) override {
    std::vector<std::size_t> open;
    for (std::size_t i = 0; i < evaluated.size(); ++i)
      if (!evaluated[i]) open.push_back(i);
    if (open.empty()) throw ExhaustedSpaceError("every pool point has been evaluated");
    (void)pool_unit;
    return open[std::uniform_int_distribution<std::size_t>(0, open.size() - 1)(rng)];
  }
};

/// GP-EI with either fixed hyperparameters or a MAP fit every iteration.
class GpProposer : public Proposer {
 public:
  explicit GpProposer(gp::KernelParams fixed, ProposeConfig cfg = {}) : fixed_(std::move(fixed)), cfg_(cfg) {}
  GpProposer(gp::KernelKind kind, gp::Hyperpriors hp, gp::MapFitConfig fit, ProposeConfig cfg = {})
      : map_kind_(kind), hp_(hp), fit_(fit), cfg_(cfg) {}

  std::string name() const override { return fixed_ ? "gp-fixed" : "gp-map"; }
  std::string last_acquisition() const override { return "ei"; }

  std::vector<Eigen::RowVectorXd> propose(const BoState& s, Rng& rng) override {
    const auto post = posterior(s, rng);
    const GpEiSurface surf{post, s.y_model.maxCoeff()};
    std::vector<Eigen::RowVectorXd> out;
    for (auto& c : propose_candidates(surf, s.x_unit, s.space.size(), rng, cfg_)) out.push_back(std::move(c.x));
    return out;
  }

  std::size_t propose_pool(const BoState& s, const Eigen::MatrixXd& pool_unit, const std::vector<bool>& evaluated,
                           Rng& rng) override {
    const auto post = posterior(s, rng);
    return propose_from_pool(GpEiSurface{post, s.y_model.maxCoeff()}, pool_unit, evaluated);
  }

 private:
  gp::GpPosterior posterior(const BoState& s, Rng& rng) const {
    if (fixed_) return gp::GpPosterior(*fixed_, s.x_unit, s.y_model);
    if (s.x_unit.rows() < 2) {
      gp::KernelParams p;
      p.kind = map_kind_;
      return gp::GpPosterior(p, s.x_unit, s.y_model);
    }
    return gp::GpPosterior(gp::fit_map(map_kind_, hp_, s.x_unit, s.y_model, rng, fit_).params, s.x_unit, s.y_model);
  }

  std::optional<gp::KernelParams> fixed_;
  gp::KernelKind map_kind_ = gp::KernelKind::Matern32;
  gp::Hyperpriors hp_{};
  gp::MapFitConfig fit_{};
  ProposeConfig cfg_;
};

struct PfnProposerConfig {
  Acquisition acq{};
  ProposeConfig propose{};
  bool warp = false;
  int warp_every = 5;
  WarpFitConfig warp_fit{};
  double kg_probability = 0.0;  // per-iteration chance of the learned KG acquisition
  std::optional<UserPriorSpec> user_prior;
};

/// PFN surrogate. EI/PI are taken w.r.t. the best model-space observation.
class PfnProposer : public Proposer {
 public:
  PfnProposer(std::shared_ptr<const PfnModel> model, PfnProposerConfig cfg) : model_(std::move(model)), cfg_(std::move(cfg)) {
    if (cfg_.kg_probability > 0.0 && model_->config().style != StyleVocabulary::Kg)
      throw ConfigError("KG acquisition requires a model trained with the kg style vocabulary");
  }

  std::string name() const override { return "pfn"; }
  std::string last_acquisition() const override { return last_; }
  const WarpParams& warp() const { return warp_; }
  const std::vector<WarpFitResult>& warp_fits() const { return warp_fits_; }

  std::vector<Eigen::RowVectorXd> propose(const BoState& s, Rng& rng) override {
    prepare(s, rng);
    const auto cond = condition(s);
    const PfnSurface surf{cond, acquisition(s)};
    const Eigen::MatrixXd xw = warp_.apply(s.x_unit);
    std::vector<Eigen::RowVectorXd> out;
    for (auto& c : propose_candidates(surf, xw, s.space.size(), rng, cfg_.propose)) out.push_back(warp_.invert(c.x));
    return out;
  }

  std::size_t propose_pool(const BoState& s, const Eigen::MatrixXd& pool_unit, const std::vector<bool>& evaluated,
                           Rng& rng) override {
    prepare(s, rng);
    const auto cond = condition(s);
    return propose_from_pool(PfnSurface{cond, acquisition(s)}, warp_.apply(pool_unit), evaluated);
  }

 private:
  void prepare(const BoState& s, Rng& rng) {
    const int d = s.space.size();
    if (warp_.dims() != d) warp_ = WarpParams::identity(d);
    use_kg_ = cfg_.kg_probability > 0.0 && EiKgPolicy{cfg_.kg_probability}.use_kg(rng);
    last_ = use_kg_ ? "kg" : to_string(cfg_.acq.kind);
    if (cfg_.warp && cfg_.warp_every > 0 && s.iteration % cfg_.warp_every == 0) {
      Dataset data{s.x_unit, s.y_model};
      auto fit = fit_warp(*model_, data, rng, cfg_.warp_fit, base_style());
      warp_ = fit.params;
      warp_fits_.push_back(std::move(fit));
    }
  }

  StyleInput base_style() const {
    StyleInput st;
    st.user_prior = cfg_.user_prior;
    return st;
  }

  Conditioned condition(const BoState& s) const {
    StyleInput st = base_style();
    if (use_kg_) st.mode = StyleMode::Kg;
    return model_->condition(warp_.apply(s.x_unit), s.y_model, st);
  }

  Acquisition acquisition(const BoState& s) const {
    Acquisition a = cfg_.acq;
    // KG = mean of the look-ahead distribution minus tau(D); tau is constant over x.
    if (use_kg_) a.kind = AcqKind::Mean;
    a.f_star = s.y_model.maxCoeff();
    return a;
  }

  std::shared_ptr<const PfnModel> model_;
  PfnProposerConfig cfg_;
  WarpParams warp_;
  std::vector<WarpFitResult> warp_fits_;
  bool use_kg_ = false;
  std::string last_ = "ei";
};

// ---------------------------------------------------------------------------

struct TrajectoryStep {
  int iteration = 0;  // 0-based; initial design first
  Eigen::RowVectorXd x;  // raw point
  double y_raw = 0.0;
  double y_transformed = 0.0;  // under the transform fitted after this observation
  double incumbent = 0.0;
  std::string acquisition;  // "init" for the initial design
  std::optional<std::size_t> pool_index;
};

struct Trajectory {
  std::vector<TrajectoryStep> steps;
  std::uint64_t seed = 0;
  std::string config_fingerprint;
  std::string model_version;
  std::string status = "complete";
  int failed_evaluations = 0;

  double incumbent() const { return steps.empty() ? -std::numeric_limits<double>::infinity() : steps.back().incumbent; }
};

struct BoConfig {
  int budget = 50;  // iterations after the initial design
  InitDesign init = InitDesign::SobolD;
  bool output_transform = true;
};

/// Objective on raw points; throwing or returning a non-finite value marks a failed evaluation.
using Objective = std::function<double(const Eigen::RowVectorXd&)>;

namespace detail {

inline std::optional<double> safe_eval(const Objective& f, const Eigen::RowVectorXd& x) {
  try {
    const double v = f(x);
    if (std::isfinite(v)) return v;
  } catch (const std::exception&) {
  }
  return std::nullopt;
}

inline std::size_t nearest_open(const Eigen::MatrixXd& pool_unit, const std::vector<bool>& evaluated,
                                const Eigen::RowVectorXd& u) {
  std::size_t best = evaluated.size();
  double bd = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < pool_unit.rows(); ++i) {
    if (evaluated[static_cast<std::size_t>(i)]) continue;
    const double dist = (pool_unit.row(i) - u).squaredNorm();
    if (dist < bd) {
      bd = dist;
      best = static_cast<std::size_t>(i);
    }
  }
  if (best == evaluated.size()) throw ExhaustedSpaceError("every pool point has been evaluated");
  return best;
}

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace detail

inline std::string fingerprint(const std::string& text) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << detail::fnv1a(text);
  return os.str();
}

/// Runs the initial design plus `cfg.budget` proposals.
inline Trajectory run_bo(const Objective& objective, Proposer& proposer, const SearchSpace& space, const BoConfig& cfg,
                         Rng& rng) {
  space.validate();
  if (cfg.budget < 0) throw ConfigError("budget must be >= 0");
  const auto cube = space.cube();
  const int d = space.size();
  Trajectory traj;
  Eigen::MatrixXd x_unit(0, d);
  Eigen::VectorXd y_raw(0);
  std::vector<bool> evaluated;
  Eigen::MatrixXd pool_unit;
  if (space.pool) {
    pool_unit = cube.to_unit(*space.pool);
    evaluated.assign(static_cast<std::size_t>(pool_unit.rows()), false);
  }
  auto already = [&](const Eigen::RowVectorXd& raw) {
    for (const auto& s : traj.steps)
      if (s.x == raw) return true;
    return false;
  };
  auto record = [&](const Eigen::RowVectorXd& raw, double y, const std::string& acq, std::optional<std::size_t> pidx) {
    x_unit.conservativeResize(x_unit.rows() + 1, d);
    x_unit.row(x_unit.rows() - 1) = cube.to_unit(raw);
    y_raw.conservativeResize(y_raw.size() + 1);
    y_raw(y_raw.size() - 1) = y;
    TrajectoryStep st;
    st.iteration = static_cast<int>(traj.steps.size());
    st.x = raw;
    st.y_raw = y;
    st.incumbent = traj.steps.empty() ? y : std::max(traj.steps.back().incumbent, y);
    st.acquisition = acq;
    st.pool_index = pidx;
    traj.steps.push_back(std::move(st));
  };

  // Initial design.
  const Eigen::MatrixXd init = initial_design(space, cfg.init, rng);
  for (Eigen::Index i = 0; i < init.rows(); ++i) {
    Eigen::RowVectorXd raw;
    std::optional<std::size_t> pidx;
    if (space.pool) {
      try {
        pidx = detail::nearest_open(pool_unit, evaluated, init.row(i));
      } catch (const ExhaustedSpaceError&) {
        traj.status = "exhausted";
        return traj;
      }
      raw = space.pool->row(static_cast<Eigen::Index>(*pidx));
    } else {
      raw = round_to_space(space, cube.from_unit(init.row(i)), rng);
      if (already(raw)) continue;
    }
    const auto y = detail::safe_eval(objective, raw);
    if (!y) {
      ++traj.failed_evaluations;
      continue;
    }
    if (pidx) evaluated[*pidx] = true;
    record(raw, *y, "init", pidx);
  }
  if (traj.steps.empty()) {
    // Every initial point failed: fall back to one random point.
    Eigen::RowVectorXd raw = space.pool ? Eigen::RowVectorXd(space.pool->row(0))
                                        : round_to_space(space, cube.from_unit(uniform_inputs(1, d, rng).row(0)), rng);
    const auto y = detail::safe_eval(objective, raw);
    if (!y) {
      ++traj.failed_evaluations;
      traj.status = "aborted: initial design could not be evaluated";
      return traj;
    }
    std::optional<std::size_t> pidx;
    if (space.pool) {
      pidx = 0;
      evaluated[0] = true;
    }
    record(raw, *y, "init", pidx);
  }

  int iteration = 0;
  for (int it = 0; it < cfg.budget; ++it) {
    const OutputTransform tf = cfg.output_transform ? fit_output_transform(y_raw) : OutputTransform{};
    const Eigen::VectorXd y_model = cfg.output_transform ? tf.apply(y_raw) : y_raw;
    traj.steps.back().y_transformed = y_model(y_model.size() - 1);
    BoState state{space, x_unit, y_model, iteration};
    bool done = false;
    for (int attempt = 0; attempt < 2 && !done; ++attempt) {
      Eigen::RowVectorXd raw;
      std::optional<std::size_t> pidx;
      try {
        if (space.pool) {
          pidx = proposer.propose_pool(state, pool_unit, evaluated, rng);
          raw = space.pool->row(static_cast<Eigen::Index>(*pidx));
        } else {
          const auto ranked = proposer.propose(state, rng);
          bool found = false;
          for (const auto& u : ranked) {
            raw = round_to_space(space, cube.from_unit(u), rng);
            if (!already(raw)) {
              found = true;
              break;
            }
          }
          if (!found) throw ExhaustedSpaceError("all proposals were already evaluated");
        }
      } catch (const ExhaustedSpaceError&) {
        traj.status = "exhausted";
        return traj;
      }
      const auto y = detail::safe_eval(objective, raw);
      if (!y) {
        ++traj.failed_evaluations;
        if (pidx) evaluated[*pidx] = true;  // do not propose a failing pool point again
        continue;
      }
      if (pidx) evaluated[*pidx] = true;
      record(raw, *y, proposer.last_acquisition(), pidx);
      done = true;
    }
    ++iteration;
    if (!done) {
      traj.status = "aborted: objective failed twice";
      return traj;
    }
  }
  if (cfg.output_transform) {
    const auto tf = fit_output_transform(y_raw);
    traj.steps.back().y_transformed = tf.apply(y_raw(y_raw.size() - 1));
  } else {
    traj.steps.back().y_transformed = y_raw(y_raw.size() - 1);
  }
  return traj;
}

inline void write_trajectory_csv(const Trajectory& t, std::ostream& os) {
  const int d = t.steps.empty() ? 0 : static_cast<int>(t.steps.front().x.size());
  os << "iteration";
  for (int j = 0; j < d; ++j) os << ",x_" << j;
  os << ",y_raw,incumbent\n" << std::setprecision(17);
  for (const auto& s : t.steps) {
    os << s.iteration;
    for (int j = 0; j < d; ++j) os << "," << s.x(j);
    os << "," << s.y_raw << "," << s.incumbent << "\n";
  }
}

inline nlohmann::json trajectory_metadata(const Trajectory& t) {
  nlohmann::json acq = nlohmann::json::array();
  for (const auto& s : t.steps) acq.push_back(s.acquisition);
  return {{"seed", t.seed},
          {"config_hash", t.config_fingerprint},
          {"model_version", t.model_version},
          {"status", t.status},
          {"failed_evaluations", t.failed_evaluations},
          {"acquisitions", acq}};
}

}  // namespace pfnbo
