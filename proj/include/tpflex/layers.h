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
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tpflex/comm.h"
#include "tpflex/migration.h"
#include "tpflex/resize.h"
#include "tpflex/tensor.h"

namespace tpflex {

enum class LinearMode { kColumn, kRow };

// One 1D tensor-parallel linear layer, y = x W^T. Shards are indexed by
// rank-1. Column mode splits the output dimension: shard [d_out/e x d_in].
// Row mode splits the input dimension: shard [d_out x d_in/e].
struct TPLinear {
  LinearMode mode = LinearMode::kColumn;
  std::string name;
  std::size_t d_in = 0;
  std::size_t d_out = 0;
  std::vector<Matrix> shards;

  // Rows of the local shard, i.e. output columns of the local matmul.
  std::size_t width() const;
  // Columns of the local shard: the contraction dimension.
  std::size_t contraction() const;
  // Reassembles the dense [d_out x d_in] weight.
  Matrix dense() const;
  // The dense weight is split without reinitialising, so the model does
  // not depend on the parallel degree.
  static TPLinear from_dense(LinearMode mode, std::string name,
                             const Matrix& dense, int e);
};

// Per-layer instructions for one iteration.
struct LayerControl {
  std::vector<IndexSet> prune;  // by rank-1; empty vector means no pruning
  std::vector<MigrationPlan> migrations;
  ImputationPolicy imputation = ImputationPolicy::kZero;
  PruneCost prune_cost;

  bool active() const;
  const IndexSet& prune_for(int rank) const;
};

// Everything a layer keeps between its forward and backward passes.
struct LinearSaved {
  std::vector<Matrix> input;  // by rank-1, as seen by the layer
  // Per migration plan: the weight rows the straggler sent out and, in row
  // mode, its input shard. Helpers use them again in backward.
  std::vector<Matrix> weight_block;
  std::vector<Matrix> input_block;
};

// Task-local resizing state shared by all layers.
struct ResizeRuntime {
  std::vector<LineageTable> lineage;             // by rank-1
  std::vector<std::map<std::string, Matrix>> history;  // kSame cache
  bool keep_history = false;

  explicit ResizeRuntime(int e = 1)
      : lineage(static_cast<std::size_t>(e)),
        history(static_cast<std::size_t>(e)) {}
  void clear_lineage();
};

// Audit counters for one or more iterations.
struct LayerAudit {
  std::uint64_t pruned_matmuls = 0;
  std::uint64_t imputations = 0;
  std::uint64_t migrated_matmuls = 0;  // per plan and layer: 3 per iteration
  std::uint64_t explicit_reduces = 0;
  std::uint64_t merged_collections = 0;

  LayerAudit& operator+=(const LayerAudit& o);
};

// Forward of one layer across all ranks. Column mode: `x` holds the
// replicated input and the result is each rank's [N x d_out/e] output.
// Row mode: `x` holds input shards and the result is each rank's partial
// [N x d_out] product before the all-reduce. With `ctl` inactive this is the
// plain tensor-parallel forward.
std::vector<Matrix> linear_forward(const TPLinear& layer,
                                   const std::vector<Matrix>& x,
                                   Communicator& comm, const LayerControl& ctl,
                                   ResizeRuntime& rt, LinearSaved& saved,
                                   LayerAudit* audit = nullptr);

struct LinearGrads {
  // Column mode: partial input gradients (to be all-reduced).
  // Row mode: each rank's input-shard gradient.
  std::vector<Matrix> grad_input;
  std::vector<Matrix> grad_weight;  // by rank-1, shard-shaped
};

LinearGrads linear_backward(const TPLinear& layer, const LinearSaved& saved,
                            const std::vector<Matrix>& grad_output,
                            Communicator& comm, const LayerControl& ctl,
                            ResizeRuntime& rt, LayerAudit* audit = nullptr);

// Local accumulation that replaces the migration reduce when an all-reduce
// on the same tensor follows: every helper of `plan` adds its block into its
// own partial at column `col_offset[rank-1]`. Throws MergeContextError when
// no all-reduce follows.
void migrate_collection_merged(std::vector<Matrix>& partials,
                               const std::vector<Matrix>& helper_blocks,
                               const std::vector<std::size_t>& col_offset,
                               const MigrationPlan& plan,
                               bool followed_by_all_reduce);

// Convenience wrappers with the plain semantics.
std::vector<Matrix> tp_linear_forward(const TPLinear& layer,
                                      const std::vector<Matrix>& x,
                                      Communicator& comm);
// Column mode returns all-reduced input gradients; row mode returns the
// local input-shard gradients.
LinearGrads tp_linear_backward(const TPLinear& layer,
                               const std::vector<Matrix>& x_saved,
                               const std::vector<Matrix>& grad_output,
                               Communicator& comm);

}  // namespace tpflex
