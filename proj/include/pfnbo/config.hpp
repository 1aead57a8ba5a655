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

// JSON configuration for the command-line entry points: bindings for the
// prior and optimizer settings, dotted-key overrides and construction of
// proposers from a method description.

#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "pfnbo/bo.hpp"
#include "pfnbo/errors.hpp"
#include "pfnbo/gp.hpp"
#include "pfnbo/kg.hpp"
#include "pfnbo/pfn.hpp"
#include "pfnbo/priors.hpp"

namespace pfnbo {
namespace gp {

NLOHMANN_JSON_SERIALIZE_ENUM(KernelKind, {{KernelKind::Rbf, "rbf"}, {KernelKind::Matern32, "matern32"}})
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(KernelParams, kind, lengthscales, outputscale, noise)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(Hyperpriors, outputscale_shape, outputscale_rate, lengthscale_shape,
                                                lengthscale_rate, log_noise_mean, log_noise_std)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(MapFitConfig, restarts, steps, learning_rate, ard, min_log, max_log)

}  // namespace gp

NLOHMANN_JSON_SERIALIZE_ENUM(PriorKind, {{PriorKind::SimpleGp, "simple-gp"}, {PriorKind::Hebo, "hebo"}, {PriorKind::Bnn, "bnn"}})
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(BnnPriorConfig, min_layers, max_layers, min_hidden, max_hidden,
                                                min_weight_std, max_weight_std, zero_probability, min_activation_noise,
                                                max_activation_noise, min_output_noise, max_output_noise)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(PriorConfig, kind, simple, hebo, bnn, spurious_fraction, prior_warp,
                                                warp_c1_std, warp_c2_std, user_prior, no_prior_probability, min_dims,
                                                max_dims, group_size)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(ProposeConfig, candidates, top_k, max_iterations, grad_tolerance)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(WarpFitConfig, restarts, steps, learning_rate, min_log, max_log)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(KgStageConfig, optim, plain_fraction, mean_fraction)

/// How one optimizer proposes points.
struct MethodConfig {
  std::string surrogate = "pfn";  // pfn | gp-fixed | gp-map | random
  std::string checkpoint;
  std::string acquisition = "ei";
  double ucb_quantile = 0.95;
  double kg_probability = 0.0;
  bool warp = false;
  int warp_every = 5;
  WarpFitConfig warp_fit{};
  std::string init = "sobol-d";
  bool output_transform = true;
  ProposeConfig propose{};
  gp::MapFitConfig map_fit{};
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(MethodConfig, surrogate, checkpoint, acquisition, ucb_quantile,
                                                kg_probability, warp, warp_every, warp_fit, init, output_transform, propose,
                                                map_fit)

struct NamedMethod {
  std::string name;
  MethodConfig method;
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(NamedMethod, name, method)

struct TrainSection {
  std::string output = "model.pfn";
  std::string loss_log;  // optional per-step loss CSV
  bool kg = false;       // run the mean and kg stages after the base stage
  KgStageConfig mean_stage{};
  KgStageConfig kg_stage{};
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(TrainSection, output, loss_log, kg, mean_stage, kg_stage)

struct ObjectiveConfig {
  std::string function = "branin";  // test function name, or "benchmark"
  int dims = 2;                      // for dimension-free functions
  std::string benchmark;             // benchmark CSV, pool mode
  int task = 0;
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(ObjectiveConfig, function, dims, benchmark, task)

struct BoSection {
  MethodConfig method{};
  ObjectiveConfig objective{};
  int budget = 50;
  std::string output = "trajectory.csv";  // metadata goes to <output>.json
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(BoSection, method, objective, budget, output)

struct BenchSection {
  int tasks = 100;
  int points = 200;
  int dims = 1;
  std::string output = "benchmark.csv";
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(BenchSection, tasks, points, dims, output)

inline std::vector<NamedMethod> default_optimizers() {
  NamedMethod gp{"gp-fixed", {}}, random{"random", {}};
  gp.method.surrogate = "gp-fixed";
  random.method.surrogate = "random";
  return {gp, random};
}

struct CompareSection {
  std::string benchmark = "benchmark.csv";
  int budget = 50;
  int repetitions = 1;
  int workers = 1;
  std::vector<NamedMethod> optimizers = default_optimizers();
  std::string output = "report";  // file prefix
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(CompareSection, benchmark, budget, repetitions, workers, optimizers, output)

struct InspectSection {
  int datasets = 4;
  int points = 20;
  int dims = 1;
  std::string output = "prior.csv";
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(InspectSection, datasets, points, dims, output)

struct CliConfig {
  PriorConfig prior{};
  PfnConfig model{};
  TrainSection train{};
  BoSection bo{};
  BenchSection bench{};
  CompareSection compare{};
  InspectSection inspect{};
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(CliConfig, prior, model, train, bo, bench, compare, inspect)

namespace detail {

/// Rejects keys that the defaults do not have; arrays are taken as given.
inline void check_known_keys(const nlohmann::json& given, const nlohmann::json& known, const std::string& path) {
  if (!given.is_object() || !known.is_object()) return;
  for (auto it = given.begin(); it != given.end(); ++it) {
    const auto k = known.find(it.key());
    const std::string p = path.empty() ? it.key() : path + "." + it.key();
    if (k == known.end()) throw ConfigError("unknown configuration key '" + p + "'");
    check_known_keys(it.value(), *k, p);
  }
}

}  // namespace detail

/// Parses "a.b.c=value". The value is read as JSON when it parses, else as a string.
inline void apply_override(nlohmann::json& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override must look like key=value: " + assignment);
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  nlohmann::json value = nlohmann::json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  nlohmann::json* node = &cfg;
  std::size_t start = 0;
  for (;;) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!node->is_object() || !node->contains(part)) throw ConfigError("unknown configuration key '" + key + "'");
    node = &(*node)[part];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  *node = std::move(value);
}

/// Defaults, then the file contents, then the overrides in order.
inline CliConfig load_cli_config(const std::optional<nlohmann::json>& file, const std::vector<std::string>& overrides) {
  nlohmann::json j = CliConfig{};
  if (file) {
    detail::check_known_keys(*file, j, "");
    j.merge_patch(*file);
  }
  for (const auto& o : overrides) apply_override(j, o);
  try {
    return j.get<CliConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid configuration: ") + e.what());
  }
}

/// Loads each checkpoint once.
class ModelCache {
 public:
  std::shared_ptr<const PfnModel> get(const std::string& path) {
    if (path.empty()) throw ConfigError("a pfn surrogate needs a checkpoint path");
    std::lock_guard<std::mutex> lock(mutex_);
    auto& slot = models_[path];
    if (!slot) slot = std::make_shared<const PfnModel>(PfnModel::load(path));
    return slot;
  }

 private:
  std::mutex mutex_;
  std::map<std::string, std::shared_ptr<const PfnModel>> models_;
};

inline std::unique_ptr<Proposer> make_proposer(const MethodConfig& m, const PriorConfig& prior, ModelCache& cache) {
  if (m.surrogate == "random") return std::make_unique<RandomProposer>();
  if (m.surrogate == "gp-fixed") return std::make_unique<GpProposer>(prior.simple, m.propose);
  if (m.surrogate == "gp-map") return std::make_unique<GpProposer>(gp::KernelKind::Matern32, prior.hebo, m.map_fit, m.propose);
  if (m.surrogate == "pfn") {
    PfnProposerConfig pc;
    pc.acq = {parse_acq_kind(m.acquisition), 0.0, m.ucb_quantile};
    pc.propose = m.propose;
    pc.warp = m.warp;
    pc.warp_every = m.warp_every;
    pc.warp_fit = m.warp_fit;
    pc.kg_probability = m.kg_probability;
    return std::make_unique<PfnProposer>(cache.get(m.checkpoint), pc);
  }
  throw ConfigError("unknown surrogate '" + m.surrogate + "'");
}

}  // namespace pfnbo
