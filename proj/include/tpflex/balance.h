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
#include <vector>

#include "tpflex/layers.h"
#include "tpflex/migration.h"
#include "tpflex/model.h"
#include "tpflex/resize.h"
#include "tpflex/rng.h"

namespace tpflex {

// How a rank sheds work in one iteration. All vectors are by rank-1.
struct BalanceDecision {
  std::vector<double> prune_ratio;    // share of contraction columns pruned
  std::vector<double> migrate_ratio;  // share of shard rows sent to helpers
  std::vector<bool> may_help;         // false keeps a rank out of helping

  explicit BalanceDecision(int e = 0)
      : prune_ratio(static_cast<std::size_t>(e), 0.0),
        migrate_ratio(static_cast<std::size_t>(e), 0.0),
        may_help(static_cast<std::size_t>(e), true) {}
  bool idle() const;
};

enum class PruneSelection { kRandom, kPriority, kPriorityDifferentiated };

struct ControlOptions {
  PruneSelection selection = PruneSelection::kPriority;
  ImputationPolicy imputation = ImputationPolicy::kZero;
  CollectionMode collection = CollectionMode::kMerged;
  MigrationPrimitive primitive = MigrationPrimitive::kBroadcastReduce;
  PruneCost prune_cost;
  PriorityConfig priority;
};

std::size_t migrate_count(std::size_t width, double ratio);

// Random subset of `count` columns out of `cols`, ascending.
IndexSet random_columns(std::size_t cols, std::size_t count, Rng& rng);

// `priority` holds one state per rank and may be null for random selection.
IterationControl make_iteration_control(
    const TPModel& model, const BalanceDecision& decision,
    const ControlOptions& opts, const std::vector<PriorityState>* priority,
    Rng& rng);

// Per-rank priority states sized to the local shards of `model`.
std::vector<PriorityState> make_priority_states(const TPModel& model);

// Local shard of every layer for one rank.
std::vector<Matrix> local_weights(const TPModel& model, int rank);

}  // namespace tpflex
