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

// Discrete benchmark tasks (lookup tables drawn from a prior), optimizer
// comparison on them, and the regret/rank/wins aggregation with CSV output.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Core>

#include "pfnbo/bo.hpp"
#include "pfnbo/errors.hpp"
#include "pfnbo/priors.hpp"
#include "pfnbo/stats.hpp"

namespace pfnbo {

struct DiscreteTask {
  Dataset table;
  double best = 0.0;
};

/// Per-purpose generator: identical (seed, a, b) give identical streams.
inline Rng derived_rng(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), static_cast<std::uint32_t>(a),
                    static_cast<std::uint32_t>(a >> 32), static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
  return Rng(seq);
}

inline std::vector<DiscreteTask> make_benchmark(const Prior& prior, int n_tasks, int n_points, int dims, std::uint64_t seed) {
  if (n_points < 2) throw DomainError("a benchmark task needs at least two points");
  if (n_tasks < 0 || dims < 1) throw DomainError("invalid benchmark size");
  std::vector<DiscreteTask> out;
  for (int t = 0; t < n_tasks; ++t) {
    Rng rng = derived_rng(seed, static_cast<std::uint64_t>(t));
    DiscreteTask task{prior.sample(n_points, dims, rng), 0.0};
    task.table.validate();
    task.best = task.table.y.maxCoeff();
    out.push_back(std::move(task));
  }
  return out;
}

inline void write_benchmark(const std::vector<DiscreteTask>& tasks, std::ostream& os) {
  const int d = tasks.empty() ? 0 : tasks.front().table.d();
  os << "task";
  for (int j = 0; j < d; ++j) os << ",x_" << j;
  os << ",y\n" << std::setprecision(17);
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    const auto& tb = tasks[t].table;
    for (int i = 0; i < tb.n(); ++i) {
      os << t;
      for (int j = 0; j < d; ++j) os << "," << tb.x(i, j);
      os << "," << tb.y(i) << "\n";
    }
  }
}

namespace detail {

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline double parse_double(const std::string& s) {
  std::size_t pos = 0;
  const double v = std::stod(s, &pos);
  if (pos != s.size()) throw DomainError("malformed number '" + s + "'");
  return v;
}

}  // namespace detail

inline std::vector<DiscreteTask> read_benchmark(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) return {};
  const auto head = detail::split_csv(line);
  if (head.size() < 3 || head.front() != "task" || head.back() != "y") throw DomainError("not a benchmark CSV");
  const int d = static_cast<int>(head.size()) - 2;
  std::vector<std::vector<std::vector<double>>> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto c = detail::split_csv(line);
    if (static_cast<int>(c.size()) != d + 2) throw DomainError("benchmark row has the wrong width");
    const auto t = static_cast<std::size_t>(std::stoul(c[0]));
    if (t >= rows.size()) rows.resize(t + 1);
    std::vector<double> r;
    for (std::size_t k = 1; k < c.size(); ++k) r.push_back(detail::parse_double(c[k]));
    rows[t].push_back(std::move(r));
  }
  std::vector<DiscreteTask> out;
  for (const auto& rs : rows) {
    DiscreteTask task;
    task.table.x.resize(static_cast<Eigen::Index>(rs.size()), d);
    task.table.y.resize(static_cast<Eigen::Index>(rs.size()));
    for (std::size_t i = 0; i < rs.size(); ++i) {
      for (int j = 0; j < d; ++j) task.table.x(static_cast<Eigen::Index>(i), j) = rs[i][static_cast<std::size_t>(j)];
      task.table.y(static_cast<Eigen::Index>(i)) = rs[i].back();
    }
    task.table.validate();
    task.best = task.table.y.maxCoeff();
    out.push_back(std::move(task));
  }
  return out;
}

// ---------------------------------------------------------------------------

/// A named optimizer; `make` returns a fresh proposer for every run.
struct OptimizerSpec {
  std::string name;
  std::function<std::unique_ptr<Proposer>()> make;
  InitDesign init = InitDesign::SobolD;
  bool output_transform = true;
};

struct RunRecord {
  std::string optimizer;
  int task = 0;
  int repetition = 0;
  int step = 0;  // 1-based evaluation count
  double incumbent = 0.0;
  double regret = 0.0;
  double rank = 0.0;
};

struct FailedRun {
  int task = 0;
  int repetition = 0;
  std::string optimizer;
  std::string reason;
};

struct CurvePoint {
  double mean_regret = 0.0;
  double regret_ci = 0.0;  // 95% half-width, normal approximation over runs
  double mean_rank = 0.0;
  double rank_ci = 0.0;
};

struct PairwiseResult {
  std::string a, b;
  int wins = 0, ties = 0, losses = 0;  // from a's point of view, at the final step
};

struct ComparisonReport {
  std::vector<std::string> optimizers;
  int budget = 0;
  std::vector<RunRecord> records;
  std::vector<FailedRun> failed;
  std::map<std::string, std::vector<CurvePoint>> curves;  // indexed by step - 1
  std::vector<PairwiseResult> pairwise;
  int completed_runs = 0;
};

namespace detail {

inline CurvePoint summarize(const std::vector<double>& regret, const std::vector<double>& rank) {
  CurvePoint c;
  if (regret.empty()) return c;
  c.mean_regret = stats::mean(regret);
  c.mean_rank = stats::mean(rank);
  if (regret.size() > 1) {
    c.regret_ci = 1.959963984540054 * stats::standard_error(regret);
    c.rank_ci = 1.959963984540054 * stats::standard_error(rank);
  }
  return c;
}

}  // namespace detail

/// Ranks, curves and pairwise counts from per-step records. Records of one
/// (task, repetition) must cover every optimizer and step.
inline ComparisonReport aggregate(std::vector<std::string> optimizers, int budget, std::vector<RunRecord> records,
                                  std::vector<FailedRun> failed) {
  ComparisonReport r;
  r.optimizers = std::move(optimizers);
  r.budget = budget;
  r.failed = std::move(failed);
  std::map<std::string, std::size_t> opt_index;
  for (std::size_t k = 0; k < r.optimizers.size(); ++k) opt_index[r.optimizers[k]] = k;
  const std::size_t K = r.optimizers.size();
  // (task, rep) -> [step][optimizer] -> record index
  std::map<std::pair<int, int>, std::vector<std::vector<long>>> runs;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& rec = records[i];
    auto it = opt_index.find(rec.optimizer);
    if (it == opt_index.end()) throw DomainError("record for unknown optimizer '" + rec.optimizer + "'");
    if (rec.step < 1 || rec.step > budget) throw DomainError("record step outside the budget");
    auto& grid = runs[{rec.task, rec.repetition}];
    if (grid.empty()) grid.assign(static_cast<std::size_t>(budget), std::vector<long>(K, -1));
    grid[static_cast<std::size_t>(rec.step - 1)][it->second] = static_cast<long>(i);
  }
  std::vector<std::vector<std::vector<double>>> regret(K, std::vector<std::vector<double>>(static_cast<std::size_t>(budget)));
  auto rank = regret;
  for (auto& [key, grid] : runs) {
    for (int s = 0; s < budget; ++s) {
      std::vector<double> reg(K);
      for (std::size_t k = 0; k < K; ++k) {
        const long idx = grid[static_cast<std::size_t>(s)][k];
        if (idx < 0) throw DomainError("incomplete run in comparison records");
        reg[k] = records[static_cast<std::size_t>(idx)].regret;
      }
      const auto rk = stats::average_ranks(reg);
      for (std::size_t k = 0; k < K; ++k) {
        records[static_cast<std::size_t>(grid[static_cast<std::size_t>(s)][k])].rank = rk[k];
        regret[k][static_cast<std::size_t>(s)].push_back(reg[k]);
        rank[k][static_cast<std::size_t>(s)].push_back(rk[k]);
      }
    }
  }
  r.completed_runs = static_cast<int>(runs.size());
  for (std::size_t k = 0; k < K; ++k) {
    auto& curve = r.curves[r.optimizers[k]];
    for (int s = 0; s < budget; ++s)
      curve.push_back(detail::summarize(regret[k][static_cast<std::size_t>(s)], rank[k][static_cast<std::size_t>(s)]));
  }
  for (std::size_t a = 0; a < K; ++a)
    for (std::size_t b = a + 1; b < K; ++b) {
      PairwiseResult p{r.optimizers[a], r.optimizers[b]};
      for (const auto& [key, grid] : runs) {
        if (budget == 0) break;
        const auto& last = grid.back();
        const double ia = records[static_cast<std::size_t>(last[a])].incumbent;
        const double ib = records[static_cast<std::size_t>(last[b])].incumbent;
        if (ia > ib) ++p.wins;
        else if (ia < ib) ++p.losses;
        else ++p.ties;
      }
      r.pairwise.push_back(std::move(p));
    }
  // Canonical record order: task, repetition, optimizer, step.
  r.records = std::move(records);
  std::stable_sort(r.records.begin(), r.records.end(), [&](const RunRecord& x, const RunRecord& y) {
    if (x.task != y.task) return x.task < y.task;
    if (x.repetition != y.repetition) return x.repetition < y.repetition;
    if (x.optimizer != y.optimizer) return opt_index[x.optimizer] < opt_index[y.optimizer];
    return x.step < y.step;
  });
  return r;
}

struct ComparisonConfig {
  int budget = 50;  // total evaluations, initial design included
  int repetitions = 1;
  std::uint64_t seed = 0;
  int workers = 1;
};

/// Incumbent after each of `budget` evaluations; a run that stops early keeps
/// its last incumbent.
inline std::vector<double> incumbent_curve(const Trajectory& t, int budget) {
  if (t.steps.empty()) throw DomainError("trajectory is empty");
  std::vector<double> out(static_cast<std::size_t>(budget));
  for (int s = 0; s < budget; ++s)
    out[static_cast<std::size_t>(s)] = t.steps[std::min(static_cast<std::size_t>(s), t.steps.size() - 1)].incumbent;
  return out;
}

namespace detail {

inline double lookup(const DiscreteTask& task, const Eigen::RowVectorXd& x) {
  for (Eigen::Index i = 0; i < task.table.x.rows(); ++i)
    if (task.table.x.row(i) == x) return task.table.y(i);
  throw DomainError("point is not in the task table");
}

}  // namespace detail

/// Runs every optimizer on every task and repetition. All optimizers of one
/// (task, repetition) share the run seed. A failure in any of them drops that
/// (task, repetition) from the aggregates and is listed in `failed`.
inline ComparisonReport run_comparison(const std::vector<OptimizerSpec>& optimizers, const std::vector<DiscreteTask>& tasks,
                                       const ComparisonConfig& cfg) {
  if (cfg.budget < 1 || cfg.repetitions < 1 || cfg.workers < 1) throw ConfigError("invalid comparison settings");
  std::vector<std::string> names;
  for (const auto& o : optimizers) {
    if (std::find(names.begin(), names.end(), o.name) != names.end()) throw ConfigError("duplicate optimizer name " + o.name);
    names.push_back(o.name);
  }
  const std::size_t n_jobs = tasks.size() * static_cast<std::size_t>(cfg.repetitions);
  std::vector<std::vector<RunRecord>> job_records(n_jobs);
  std::vector<std::vector<FailedRun>> job_failed(n_jobs);

  auto run_job = [&](std::size_t job) {
    const int t = static_cast<int>(job / static_cast<std::size_t>(cfg.repetitions));
    const int rep = static_cast<int>(job % static_cast<std::size_t>(cfg.repetitions));
    const auto& task = tasks[static_cast<std::size_t>(t)];
    SearchSpace space = SearchSpace::unit_cube(task.table.d());
    space.pool = task.table.x;
    std::vector<RunRecord> recs;
    for (const auto& opt : optimizers) {
      try {
        Rng rng = derived_rng(cfg.seed, static_cast<std::uint64_t>(t), static_cast<std::uint64_t>(rep));
        auto proposer = opt.make();
        BoConfig bc;
        bc.init = opt.init;
        bc.output_transform = opt.output_transform;
        const int n_init = opt.init == InitDesign::SobolD ? space.size() : 1;
        bc.budget = std::max(cfg.budget - n_init, 0);
        const auto traj = run_bo([&task](const Eigen::RowVectorXd& x) { return detail::lookup(task, x); }, *proposer, space,
                                 bc, rng);
        if (traj.status.rfind("aborted", 0) == 0) throw Error(traj.status);
        const auto inc = incumbent_curve(traj, cfg.budget);
        for (int s = 0; s < cfg.budget; ++s)
          recs.push_back({opt.name, t, rep, s + 1, inc[static_cast<std::size_t>(s)], task.best - inc[static_cast<std::size_t>(s)], 0.0});
      } catch (const std::exception& e) {
        job_failed[job].push_back({t, rep, opt.name, e.what()});
      }
    }
    if (job_failed[job].empty()) job_records[job] = std::move(recs);
  };

  if (cfg.workers == 1) {
    for (std::size_t j = 0; j < n_jobs; ++j) run_job(j);
  } else {
    std::mutex m;
    std::size_t next = 0;
    std::vector<std::thread> pool;
    for (int w = 0; w < cfg.workers; ++w)
      pool.emplace_back([&] {
        for (;;) {
          std::size_t j;
          {
            std::lock_guard<std::mutex> lock(m);
            if (next >= n_jobs) return;
            j = next++;
          }
          run_job(j);
        }
      });
    for (auto& th : pool) th.join();
  }

  std::vector<RunRecord> records;
  std::vector<FailedRun> failed;
  for (std::size_t j = 0; j < n_jobs; ++j) {
    records.insert(records.end(), job_records[j].begin(), job_records[j].end());
    failed.insert(failed.end(), job_failed[j].begin(), job_failed[j].end());
  }
  return aggregate(std::move(names), cfg.budget, std::move(records), std::move(failed));
}

// ---------------------------------------------------------------------------
// Report files: <prefix>_long.csv, <prefix>_curves.csv, <prefix>_summary.csv,
// <prefix>_pairwise.csv and <prefix>_failed.csv.

inline void write_long_csv(const ComparisonReport& r, std::ostream& os) {
  os << "optimizer,task,repetition,step,incumbent,regret,rank\n" << std::setprecision(17);
  for (const auto& x : r.records)
    os << x.optimizer << "," << x.task << "," << x.repetition << "," << x.step << "," << x.incumbent << "," << x.regret << ","
       << x.rank << "\n";
}

inline std::vector<RunRecord> read_long_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != "optimizer,task,repetition,step,incumbent,regret,rank")
    throw DomainError("not a comparison CSV");
  std::vector<RunRecord> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto c = detail::split_csv(line);
    if (c.size() != 7) throw DomainError("comparison row has the wrong width");
    out.push_back({c[0], std::stoi(c[1]), std::stoi(c[2]), std::stoi(c[3]), detail::parse_double(c[4]),
                   detail::parse_double(c[5]), detail::parse_double(c[6])});
  }
  return out;
}

namespace detail {

inline std::ofstream open_out(const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path + " for writing");
  return f;
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path);
  return f;
}

inline void check_written(std::ofstream& f, const std::string& path) {
  f.flush();
  if (!f) throw Error("failed writing " + path);
}

}  // namespace detail

inline void emit_report(const ComparisonReport& r, const std::string& prefix) {
  {
    const auto path = prefix + "_long.csv";
    auto f = detail::open_out(path);
    write_long_csv(r, f);
    detail::check_written(f, path);
  }
  {
    const auto path = prefix + "_curves.csv";
    auto f = detail::open_out(path);
    f << "optimizer,step,mean_regret,regret_ci95,mean_rank,rank_ci95\n" << std::setprecision(17);
    for (const auto& name : r.optimizers) {
      const auto& c = r.curves.at(name);
      for (std::size_t s = 0; s < c.size(); ++s)
        f << name << "," << s + 1 << "," << c[s].mean_regret << "," << c[s].regret_ci << "," << c[s].mean_rank << ","
          << c[s].rank_ci << "\n";
    }
    detail::check_written(f, path);
  }
  {
    const auto path = prefix + "_summary.csv";
    auto f = detail::open_out(path);
    f << "optimizer,budget,runs,failed_runs,final_mean_regret,regret_ci95,final_mean_rank,rank_ci95\n" << std::setprecision(17);
    std::set<std::pair<int, int>> failed_runs;
    for (const auto& x : r.failed) failed_runs.insert({x.task, x.repetition});
    for (const auto& name : r.optimizers) {
      const auto& c = r.curves.at(name);
      const CurvePoint last = c.empty() ? CurvePoint{} : c.back();
      f << name << "," << r.budget << "," << r.completed_runs << "," << failed_runs.size() << "," << last.mean_regret << ","
        << last.regret_ci << "," << last.mean_rank << "," << last.rank_ci << "\n";
    }
    detail::check_written(f, path);
  }
  {
    const auto path = prefix + "_pairwise.csv";
    auto f = detail::open_out(path);
    f << "optimizer_a,optimizer_b,wins_a,ties,wins_b\n";
    for (const auto& p : r.pairwise) f << p.a << "," << p.b << "," << p.wins << "," << p.ties << "," << p.losses << "\n";
    detail::check_written(f, path);
  }
  {
    const auto path = prefix + "_failed.csv";
    auto f = detail::open_out(path);
    f << "task,repetition,optimizer,reason\n";
    for (const auto& x : r.failed) {
      std::string reason = x.reason;
      std::replace(reason.begin(), reason.end(), ',', ';');
      std::replace(reason.begin(), reason.end(), '\n', ' ');
      f << x.task << "," << x.repetition << "," << x.optimizer << "," << reason << "\n";
    }
    detail::check_written(f, path);
  }
}

/// Rebuilds a report from the files written by emit_report.
inline ComparisonReport read_report(const std::string& prefix) {
  std::vector<std::string> names;
  int budget = 0;
  {
    auto f = detail::open_in(prefix + "_summary.csv");
    std::string line;
    std::getline(f, line);
    while (std::getline(f, line)) {
      if (line.empty()) continue;
      const auto c = detail::split_csv(line);
      names.push_back(c.at(0));
      budget = std::stoi(c.at(1));
    }
  }
  std::vector<FailedRun> failed;
  {
    auto f = detail::open_in(prefix + "_failed.csv");
    std::string line;
    std::getline(f, line);
    while (std::getline(f, line)) {
      if (line.empty()) continue;
      const auto c = detail::split_csv(line);
      failed.push_back({std::stoi(c.at(0)), std::stoi(c.at(1)), c.at(2), c.size() > 3 ? c[3] : ""});
    }
  }
  auto f = detail::open_in(prefix + "_long.csv");
  return aggregate(std::move(names), budget, read_long_csv(f), std::move(failed));
}

}  // namespace pfnbo
