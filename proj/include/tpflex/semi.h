/* Copyright 2026 The tpflex Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <cstddef>
#include <optional>
#include <utility>
#include <vector>

#include "tpflex/comm.h"
#include "tpflex/migration.h"
#include "tpflex/model.h"
#include "tpflex/resize.h"

namespace tpflex {

// Piecewise-linear interpolant through sampled (x, t) points, extended
// linearly past both ends and floored at zero.
class PiecewiseLinear {
 public:
  PiecewiseLinear() = default;
  // Needs at least two distinct x values; throws FitError otherwise.
  explicit PiecewiseLinear(std::vector<std::pair<double, double>> points);

  static PiecewiseLinear zero();
  static PiecewiseLinear linear(double slope);

  double operator()(double x) const;
  const std::vector<std::pair<double, double>>& points() const {
    return points_;
  }

 private:
  std::vector<std::pair<double, double>> points_;
};

// Costs in virtual time as functions of column volume. A volume of `hs`
// columns stands for a rank's entire per-iteration workload.
struct CostModel {
  double omega1 = 0.0;     // fixed allocation overhead of resizing
  PiecewiseLinear omega2;  // extraction cost vs pruned columns
  PiecewiseLinear phi1;    // migration communication vs migrated columns
  PiecewiseLinear phi2;    // helper computation vs columns per helper

  bool degenerate() const;
};

struct PretestOptions {
  std::vector<double> sample_gammas = {0.0, 0.25, 0.5, 0.75, 1.0};
  CollectionMode collection = CollectionMode::kMerged;
  MigrationPrimitive primitive = MigrationPrimitive::kBroadcastReduce;
  std::uint64_t seed = 0;
};

// Measures resizing and migration costs on a scratch model in virtual time
// and fits the cost functions.
CostModel pretest_costs(const ModelConfig& cfg, const CostParams& cost,
                        const PretestOptions& opts = {});

struct StragglerSet {
  double t_min = 0.0;
  std::vector<int> ranks;  // descending by time, ties by ascending rank
  std::size_t z() const { return ranks.size(); }
};

StragglerSet detect_stragglers(const std::vector<double>& times,
                               double epsilon = 0.02);

// Split of L_gamma columns between migration (beta) and resizing (1-beta)
// that balances the extra cost of each path.
double solve_beta(double l_gamma, const CostModel& cm, int e);

struct RankLoad {
  int rank = 0;
  double t = 0.0;      // runtime
  double l = 0.0;      // workload in columns
  double speed = 0.0;  // time per column when helping
};

// Migrated volume of the x slowest entries against `t_min`.
double migrated_volume(const std::vector<RankLoad>& sorted, std::size_t x,
                       double t_min);
// Benefit of migrating the x slowest entries. Receivers are the entries
// after position x.
double boundary_benefit(const std::vector<RankLoad>& sorted, std::size_t x,
                        double t_min, const CostModel& cm, int e);
// `sorted` lists all ranks by descending time, stragglers first.
std::size_t group_boundary_scan(const std::vector<RankLoad>& sorted,
                                std::size_t z, double t_min,
                                const CostModel& cm, int e);

enum class PlanMode { kNone, kSingle, kMulti };

struct HybridPlan {
  PlanMode mode = PlanMode::kNone;
  double beta = 0.0;
  std::size_t x = 0;
  std::size_t z = 0;
  double t_min = 0.0;
  std::vector<int> stragglers;
  std::vector<int> migration_group;
  std::vector<int> resize_group;
  // By rank-1: ratio of the rank's work to shed, the share of it that
  // migrates, and the criterion it is measured against.
  std::vector<double> gamma;
  std::vector<double> migrate_share;
  std::vector<Criterion> criterion;

  std::size_t lambda() const { return migration_group.size(); }
};

struct PlanInput {
  std::vector<double> detect_times;  // by rank-1
  std::vector<TimingStats> stats;    // by rank-1, refreshed
  std::vector<double> width;         // workload columns by rank-1
  std::vector<double> speed;         // helper time per column by rank-1
  double epsilon = 0.02;
  double gamma_max = 0.9;
  std::optional<std::size_t> forced_lambda;
};

HybridPlan build_plan(const PlanInput& in, const CostModel& cm, int e);

}  // namespace tpflex
