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

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tpflex/comm.h"
#include "tpflex/tensor.h"

namespace tpflex {

// Per-task runtime statistics for one iteration.
struct TimingStats {
  double t_own = 0.0;  // busy time of the iteration
  double m_own = 0.0;  // matmul share of t_own
  double t_avg = 0.0;  // cached group mean of t_own
  double t_min = 0.0;  // cached group minimum of t_own
  std::optional<double> last_refreshed_t;
};

enum class Criterion { kAvg, kMin };

std::string to_string(Criterion c);

// (t_own - criterion) / m_own without clamping; can be negative.
double raw_gamma(const TimingStats& stats, Criterion criterion);

// Pruning ratio that closes the gap to the criterion, clamped to
// [0, gamma_max]. Throws NoMatmulBaselineError when m_own is not positive.
double compute_gamma(const TimingStats& stats, Criterion criterion,
                     double gamma_max = 0.9);

// Refreshes t_avg/t_min on every rank when any rank's runtime moved by more
// than `threshold` (relative) since its last refresh, or has never been
// refreshed. Returns true when the collectives ran.
bool maybe_refresh_group_stats(std::vector<TimingStats>& stats,
                               Communicator& comm, double threshold = 0.10);

// |P| for a ratio: round-half-up of cols * gamma, capped at cols - 1.
std::size_t prune_count(std::size_t cols, double gamma);

// The k indices with the smallest value, ties broken by ascending index,
// returned as an ascending 1-based set.
IndexSet select_smallest(const std::vector<double>& values, std::size_t k);

struct LineageEntry {
  std::string layer;
  std::string matrix;
  IndexSet pruned;
};

// Records which columns were pruned from which operand during the current
// iteration so backward can put gradient columns back where they belong.
class LineageTable {
 public:
  void record(const std::string& layer, const std::string& matrix,
              IndexSet pruned);
  // Throws LineageMissError when no entry exists.
  const IndexSet& lookup(const std::string& layer,
                         const std::string& matrix) const;
  bool contains(const std::string& layer, const std::string& matrix) const;
  const std::vector<LineageEntry>& entries() const { return entries_; }
  void clear() { entries_.clear(); }

 private:
  std::vector<LineageEntry> entries_;
};

struct PriorityConfig {
  double theta_iter = 1.0e-3;
  double alpha = 0.8;  // decay applied to the uniform ratio
  int iterations_per_epoch = 1;
  double gamma_max = 0.9;
  // false selects the naive variant that overwrites the variation of pruned
  // columns with their (zero) measured change; kept for testing.
  bool incremental = true;

  double theta() const { return iterations_per_epoch * theta_iter; }
};

struct LayerPriority {
  std::size_t rows = 0;  // R_k
  std::size_t cols = 0;  // L_k
  // Carried per-column variation. +inf marks columns never measured.
  std::vector<double> w_var;
  IndexSet pri_list;
  // Columns actually pruned since the last update; their measured change is
  // an artifact of pruning and is not trusted by the incremental rule.
  IndexSet pruned_since_update;
  double gamma_variation = 0.0;  // 1 - L_uni / L_k from the last update
  bool measured = false;         // set by the first epoch update
};

class PriorityState {
 public:
  PriorityState() = default;
  // One entry per layer: (rows, cols) of the local weight shard.
  explicit PriorityState(
      const std::vector<std::pair<std::size_t, std::size_t>>& dims);

  std::size_t num_layers() const { return layers_.size(); }
  LayerPriority& layer(std::size_t k) { return layers_.at(k); }
  const LayerPriority& layer(std::size_t k) const { return layers_.at(k); }

  // Marks columns pruned during training since the last epoch update.
  void note_pruned(std::size_t k, const IndexSet& pruned);

  // Prune set for layer k at ratio gamma from the carried variation order.
  IndexSet select(std::size_t k, double gamma) const;
  // Per-layer ratio: max{gamma_variation, alpha * gamma_uniform} when
  // differentiated and the layer has been measured, else gamma_uniform;
  // clamped to gamma_max.
  double layer_gamma(std::size_t k, double gamma_uniform, bool differentiated,
                     const PriorityConfig& cfg) const;

 private:
  std::vector<LayerPriority> layers_;
};

struct ResizePlan {
  double gamma_uniform = 0.0;
  std::vector<double> layer_gamma;
  std::vector<IndexSet> prune;  // per layer
  ImputationPolicy imputation = ImputationPolicy::kZero;
};

// Epoch-boundary priority refresh. w_new/w_old hold one local shard per layer.
std::pair<PriorityState, ResizePlan> epoch_priority_update(
    const PriorityState& state, const std::vector<Matrix>& w_new,
    const std::vector<Matrix>& w_old, double gamma_uniform,
    const PriorityConfig& cfg, bool differentiated = true);

// --- local dual-pruning kernels ------------------------------------------

struct PruneCost {
  double alloc = 0.0;     // per pruned operand allocation
  double per_col = 0.0;   // per pruned column per operand row
  double of(std::size_t pruned_cols, std::size_t operand_rows) const {
    return pruned_cols == 0
               ? 0.0
               : alloc + per_col * static_cast<double>(pruned_cols) *
                             static_cast<double>(operand_rows);
  }
};

// X [N x K], W [D x K]: prunes P from both contraction dimensions and returns
// X~ * W~^T [N x D]. Records <layer, input, P> and <layer, weight, P>.
Matrix pruned_local_forward(const std::string& layer, const Matrix& x,
                            const Matrix& w, const IndexSet& pruned,
                            LineageTable& lineage, WorkCounter& acc);

struct LocalGrads {
  Matrix grad_input;   // [N x K]
  Matrix grad_weight;  // [D x K]
};

// G [N x D] is never pruned. grad_weight = G^T X~ imputed with zeros at P;
// grad_input = G W~ imputed by `policy` (`prev` feeds kSame).
LocalGrads pruned_local_backward(const std::string& layer, const Matrix& x,
                                 const Matrix& w, const Matrix& g,
                                 const LineageTable& lineage,
                                 ImputationPolicy policy, const Matrix* prev,
                                 WorkCounter& acc);

}  // namespace tpflex
