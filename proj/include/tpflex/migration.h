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
#include <string>
#include <vector>

namespace tpflex {

enum class CollectionMode { kMerged, kExplicit };
enum class MigrationPrimitive { kBroadcastReduce, kScatterGather };

std::string to_string(CollectionMode mode);
std::string to_string(MigrationPrimitive primitive);
CollectionMode parse_collection_mode(const std::string& name);
MigrationPrimitive parse_migration_primitive(const std::string& name);

// Zero-based interval [begin, begin + count) of the migrated block.
struct HelperAssignment {
  int rank = 0;
  int virtual_rank = 0;
  std::size_t begin = 0;
  std::size_t count = 0;
};

// A straggler offloads the last l_mig output columns of its local shard
// (rows of its weight shard); helpers split them by virtual rank.
struct MigrationPlan {
  int straggler = 0;
  std::size_t l_mig = 0;
  std::vector<HelperAssignment> helpers;  // ascending virtual rank
  CollectionMode collection = CollectionMode::kMerged;
  MigrationPrimitive primitive = MigrationPrimitive::kBroadcastReduce;

  bool empty() const { return l_mig == 0; }
  // Straggler first, then helpers with a non-empty share.
  std::vector<int> participants() const;
};

// (rank + e - straggler) % e; the straggler maps to 0.
int virtual_rank(int rank, int straggler, int e);

// Ranks in `excluded` (other migrating stragglers) never receive work.
MigrationPlan plan_migration(int straggler, std::size_t l_mig, int e,
                             const std::vector<int>& excluded = {});

}  // namespace tpflex
