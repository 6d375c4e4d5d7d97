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

#include "tpflex/migration.h"

#include <algorithm>

#include "tpflex/error.h"

namespace tpflex {

std::string to_string(CollectionMode mode) {
  return mode == CollectionMode::kMerged ? "merged" : "explicit";
}

std::string to_string(MigrationPrimitive primitive) {
  return primitive == MigrationPrimitive::kBroadcastReduce ? "broadcast_reduce"
                                                           : "scatter_gather";
}

CollectionMode parse_collection_mode(const std::string& name) {
  if (name == "merged") return CollectionMode::kMerged;
  if (name == "explicit") return CollectionMode::kExplicit;
  throw ConfigError("unknown collection mode '" + name + "'");
}

MigrationPrimitive parse_migration_primitive(const std::string& name) {
  if (name == "broadcast_reduce") return MigrationPrimitive::kBroadcastReduce;
  if (name == "scatter_gather") return MigrationPrimitive::kScatterGather;
  throw ConfigError("unknown migration primitive '" + name + "'");
}

std::vector<int> MigrationPlan::participants() const {
  std::vector<int> out{straggler};
  for (const auto& h : helpers) {
    if (h.count > 0) out.push_back(h.rank);
  }
  return out;
}

int virtual_rank(int rank, int straggler, int e) {
  if (e < 1 || rank < 1 || rank > e || straggler < 1 || straggler > e) {
    throw RankError("virtual renumbering needs ranks in [1, " +
                    std::to_string(e) + "]");
  }
  return (rank + e - straggler) % e;
}

MigrationPlan plan_migration(int straggler, std::size_t l_mig, int e,
                             const std::vector<int>& excluded) {
  if (e < 2) {
    throw PlanError("migration needs at least one helper; group size is " +
                    std::to_string(e));
  }
  MigrationPlan plan;
  plan.straggler = straggler;
  plan.l_mig = l_mig;
  std::vector<HelperAssignment> helpers;
  for (int r = 1; r <= e; ++r) {
    if (r == straggler ||
        std::find(excluded.begin(), excluded.end(), r) != excluded.end()) {
      continue;
    }
    helpers.push_back({r, virtual_rank(r, straggler, e), 0, 0});
  }
  if (helpers.empty()) {
    throw PlanError("every other rank is excluded from helping rank " +
                    std::to_string(straggler));
  }
  if (l_mig == 0) {
    return plan;
  }
  std::sort(helpers.begin(), helpers.end(),
            [](const auto& a, const auto& b) {
              return a.virtual_rank < b.virtual_rank;
            });
  const std::size_t n = helpers.size();
  const std::size_t base = l_mig / n;
  const std::size_t extra = l_mig % n;
  std::size_t next = 0;
  for (std::size_t i = 0; i < n; ++i) {
    helpers[i].begin = next;
    helpers[i].count = base + (i < extra ? 1 : 0);
    next += helpers[i].count;
  }
  plan.helpers = std::move(helpers);
  return plan;
}

}  // namespace tpflex
