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

// Command-line entry points: train, bo-run, bench, compare, inspect-prior.

#include <cstdint>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pfnbo/bench.hpp"
#include "pfnbo/bo.hpp"
#include "pfnbo/config.hpp"
#include "pfnbo/kg.hpp"
#include "pfnbo/objectives.hpp"
#include "pfnbo/pfn.hpp"
#include "pfnbo/priors.hpp"

namespace {

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
  std::uint64_t seed = 0;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("-c,--config", c.config_path, "JSON configuration file")->check(CLI::ExistingFile);
  cmd->add_option("--set", c.overrides, "override a configuration key, e.g. --set model.layers=2")->take_all();
  cmd->add_option("--seed", c.seed, "random seed")->required();
}

pfnbo::CliConfig load(const Common& c, std::vector<std::string> extra = {}) {
  std::optional<nlohmann::json> file;
  if (!c.config_path.empty()) {
    std::ifstream f(c.config_path);
    try {
      file = nlohmann::json::parse(f);
    } catch (const nlohmann::json::exception& e) {
      throw pfnbo::ConfigError("cannot parse " + c.config_path + ": " + e.what());
    }
  }
  auto overrides = c.overrides;
  overrides.insert(overrides.end(), extra.begin(), extra.end());
  return pfnbo::load_cli_config(file, overrides);
}

std::ofstream open_out(const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw pfnbo::Error("cannot open " + path + " for writing");
  return f;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw pfnbo::Error("cannot open " + path);
  return f;
}

int cmd_train(const Common& c) {
  const auto cfg = load(c);
  pfnbo::Rng rng(c.seed);
  const auto source = pfnbo::prior_source(cfg.prior, cfg.model);
  std::optional<std::ofstream> log;
  if (!cfg.train.loss_log.empty()) {
    log = open_out(cfg.train.loss_log);
    *log << "stage,step,loss,learning_rate\n" << std::setprecision(9);
  }
  auto hooks_for = [&](const std::string& stage) {
    pfnbo::TrainHooks h;
    h.on_step = [&log, stage](long step, double loss, double lr) {
      if (log) *log << stage << "," << step << "," << loss << "," << lr << "\n";
    };
    return h;
  };
  pfnbo::TrainReport report;
  auto model = pfnbo::train_new(cfg.model, source, rng, hooks_for("base"), &report);
  std::cout << "base stage: " << report.losses.size() << " steps, final loss " << report.losses.back() << "\n";
  if (cfg.train.kg) {
    const auto r1 = pfnbo::train_mean_head(model, source, cfg.train.mean_stage, rng, hooks_for("mean"));
    std::cout << "mean stage: final loss " << r1.losses.back() << "\n";
    const auto r2 = pfnbo::train_kg_head(model, source, cfg.train.kg_stage, rng, hooks_for("kg"));
    std::cout << "kg stage: final loss " << r2.losses.back() << "\n";
  }
  model.save(cfg.train.output);
  std::cout << "wrote " << cfg.train.output << "\n";
  return 0;
}

int cmd_bo_run(const Common& c) {
  const auto cfg = load(c);
  const auto& bo = cfg.bo;
  pfnbo::ModelCache cache;
  auto proposer = pfnbo::make_proposer(bo.method, cfg.prior, cache);
  pfnbo::SearchSpace space;
  pfnbo::Objective objective;
  std::optional<pfnbo::DiscreteTask> task;
  if (bo.objective.function == "benchmark") {
    auto f = open_in(bo.objective.benchmark);
    auto tasks = pfnbo::read_benchmark(f);
    if (bo.objective.task < 0 || bo.objective.task >= static_cast<int>(tasks.size()))
      throw pfnbo::ConfigError("benchmark task index out of range");
    task = std::move(tasks[static_cast<std::size_t>(bo.objective.task)]);
    space = pfnbo::SearchSpace::unit_cube(task->table.d());
    space.pool = task->table.x;
    objective = [&task](const Eigen::RowVectorXd& x) { return pfnbo::detail::lookup(*task, x); };
  } else {
    const auto tf = pfnbo::make_test_function(bo.objective.function, bo.objective.dims);
    space = tf.space;
    objective = tf.f;
  }
  pfnbo::BoConfig bc;
  bc.budget = bo.budget;
  bc.init = pfnbo::parse_init_design(bo.method.init);
  bc.output_transform = bo.method.output_transform;
  pfnbo::Rng rng(c.seed);
  auto traj = pfnbo::run_bo(objective, *proposer, space, bc, rng);
  traj.seed = c.seed;
  traj.config_fingerprint = pfnbo::fingerprint(nlohmann::json(cfg).dump());
  if (bo.method.surrogate == "pfn") {
    const auto m = cache.get(bo.method.checkpoint);
    traj.model_version = "pfn checkpoint format " + std::to_string(pfnbo::PfnModel::kFormatVersion) + ", " +
                         std::to_string(m->steps()) + " training steps";
  } else {
    traj.model_version = bo.method.surrogate;
  }
  {
    auto f = open_out(bo.output);
    pfnbo::write_trajectory_csv(traj, f);
  }
  {
    auto f = open_out(bo.output + ".json");
    f << pfnbo::trajectory_metadata(traj).dump(2) << "\n";
  }
  std::cout << std::setprecision(10) << "status " << traj.status << ", " << traj.steps.size() << " evaluations, incumbent "
            << traj.incumbent() << "\n";
  return 0;
}

int cmd_bench(const Common& c) {
  const auto cfg = load(c);
  const auto prior = pfnbo::make_prior(cfg.prior);
  const auto tasks = pfnbo::make_benchmark(*prior, cfg.bench.tasks, cfg.bench.points, cfg.bench.dims, c.seed);
  auto f = open_out(cfg.bench.output);
  pfnbo::write_benchmark(tasks, f);
  std::cout << "wrote " << tasks.size() << " tasks to " << cfg.bench.output << "\n";
  return 0;
}

int cmd_compare(const Common& c, std::optional<int> workers) {
  std::vector<std::string> extra;
  if (workers) extra.push_back("compare.workers=" + std::to_string(*workers));
  const auto cfg = load(c, extra);
  const auto& cmp = cfg.compare;
  std::vector<pfnbo::DiscreteTask> tasks;
  {
    auto f = open_in(cmp.benchmark);
    tasks = pfnbo::read_benchmark(f);
  }
  pfnbo::ModelCache cache;
  std::vector<pfnbo::OptimizerSpec> specs;
  for (const auto& o : cmp.optimizers) {
    pfnbo::make_proposer(o.method, cfg.prior, cache);  // loads checkpoints before any worker starts
    pfnbo::OptimizerSpec s;
    s.name = o.name;
    s.make = [m = o.method, prior = cfg.prior, &cache] { return pfnbo::make_proposer(m, prior, cache); };
    s.init = pfnbo::parse_init_design(o.method.init);
    s.output_transform = o.method.output_transform;
    specs.push_back(std::move(s));
  }
  pfnbo::ComparisonConfig cc;
  cc.budget = cmp.budget;
  cc.repetitions = cmp.repetitions;
  cc.seed = c.seed;
  cc.workers = cmp.workers;
  const auto report = pfnbo::run_comparison(specs, tasks, cc);
  pfnbo::emit_report(report, cmp.output);
  std::cout << std::setprecision(6);
  for (const auto& name : report.optimizers) {
    const auto& last = report.curves.at(name).back();
    std::cout << name << ": regret " << last.mean_regret << " +- " << last.regret_ci << ", rank " << last.mean_rank << "\n";
  }
  for (const auto& p : report.pairwise)
    std::cout << p.a << " vs " << p.b << ": " << p.wins << " wins, " << p.ties << " ties, " << p.losses << " losses\n";
  if (!report.failed.empty()) std::cout << report.failed.size() << " failed runs\n";
  return 0;
}

int cmd_inspect_prior(const Common& c) {
  const auto cfg = load(c);
  const auto& in = cfg.inspect;
  const auto prior = pfnbo::make_prior(cfg.prior);
  pfnbo::Rng rng(c.seed);
  auto f = open_out(in.output);
  f << "dataset";
  for (int j = 0; j < in.dims; ++j) f << ",x_" << j;
  f << ",y";
  if (cfg.prior.user_prior) f << ",rho" << ",interval_lo,interval_hi";
  f << "\n" << std::setprecision(17);
  for (int k = 0; k < in.datasets; ++k) {
    pfnbo::Dataset d;
    std::optional<pfnbo::UserPriorTask> up;
    if (cfg.prior.user_prior) {
      up = pfnbo::sample_user_prior_task(*prior, in.points, in.dims, rng);
      d = up->data;
    } else {
      d = prior->sample(in.points, in.dims, rng);
    }
    for (int i = 0; i < d.n(); ++i) {
      f << k;
      for (int j = 0; j < d.d(); ++j) f << "," << d.x(i, j);
      f << "," << d.y(i);
      if (up) {
        // First dimension's interval; the full spec has one per dimension.
        const auto& dp = up->spec.dims.front();
        f << "," << up->rho << "," << dp->interval.lo << "," << dp->interval.hi;
      }
      f << "\n";
    }
  }
  std::cout << "wrote " << in.datasets << " datasets to " << in.output << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Prior-data fitted networks for Bayesian optimization"};
  app.require_subcommand(1);
  Common train_c, bo_c, bench_c, cmp_c, insp_c;
  std::optional<int> workers;
  auto* train = app.add_subcommand("train", "train a PFN on a prior and write a checkpoint");
  add_common(train, train_c);
  auto* bo = app.add_subcommand("bo-run", "run one BO trajectory");
  add_common(bo, bo_c);
  auto* bench = app.add_subcommand("bench", "generate a discrete benchmark");
  add_common(bench, bench_c);
  auto* cmp = app.add_subcommand("compare", "compare optimizers on a benchmark");
  add_common(cmp, cmp_c);
  cmp->add_option("--workers", workers, "worker threads (overrides compare.workers)");
  auto* insp = app.add_subcommand("inspect-prior", "sample datasets from a prior");
  add_common(insp, insp_c);
  CLI11_PARSE(app, argc, argv);
  try {
    if (*train) return cmd_train(train_c);
    if (*bo) return cmd_bo_run(bo_c);
    if (*bench) return cmd_bench(bench_c);
    if (*cmp) return cmd_compare(cmp_c, workers);
    if (*insp) return cmd_inspect_prior(insp_c);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
