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

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tpflex/tensor.h"

namespace tpflex {

// Units are arbitrary "time units"; only ratios matter.
struct CostParams {
  double alpha = 1.0;           // per-message latency
  double beta_net = 0.001;      // time per byte
  double compute_rate = 1.0e6;  // FLOPs per time unit on a normal task
  double prune_alloc = 0.0;     // fixed cost per pruned submatrix allocation
  double prune_col_cost = 0.0;  // cost per pruned column per operand row
  // When > 0, slowed matmuls additionally sleep this many microseconds per
  // virtual time unit of skew. Never used by the tests.
  double wall_clock_us = 0.0;
};

enum class CommPattern {
  kBroadcast,
  kReduce,
  kScatter,
  kGather,
  kAllReduce,
  kAllGather,
};
inline constexpr std::size_t kNumPatterns = 6;

// Which subsystem issued a collective; used by the communication audit.
enum class CommTag { kModel, kMigration, kStats };
inline constexpr std::size_t kNumTags = 3;

enum class Axis { kRows, kCols };

std::string to_string(CommPattern pattern);

// Alpha-beta model. Tree patterns take ceil(log2 n) rounds; scatter and gather
// charge the root for n-1 serial transfers of `bytes` each.
double estimate_comm_time(std::size_t bytes, CommPattern pattern,
                          int group_size, const CostParams& cost);

int tree_rounds(int group_size);

// Per-task simulated time. All fields except `now` are busy-time totals.
struct VirtualClock {
  double now = 0.0;
  double busy = 0.0;
  double matmul = 0.0;       // own-workload matmul time
  double matmul_help = 0.0;  // matmul time spent on work migrated from others
  double elementwise = 0.0;  // activations, loss, optimizer, reductions
  double comm = 0.0;         // all communication busy time
  double comm_migration = 0.0;
  double overhead = 0.0;     // pruning allocation/extraction
  double own_flops_full = 0.0;  // tensor-parallel matmul FLOPs, unbalanced
  double fixed_flops = 0.0;     // replicated matmul FLOPs nobody can shed
  double own_flops_done = 0.0;  // matmul FLOPs actually executed for self
};

struct CommCounts {
  std::array<std::array<std::uint64_t, kNumPatterns>, kNumTags> calls{};
  std::array<std::uint64_t, kNumTags> bytes{};

  std::uint64_t count(CommTag tag, CommPattern pattern) const {
    return calls[static_cast<std::size_t>(tag)]
                [static_cast<std::size_t>(pattern)];
  }
  std::uint64_t total(CommTag tag) const;
};

// Collects per-rank contributions to one collective call site. Entering twice
// or finishing with absent ranks is an error; DeadlockError names the ranks
// that never arrived.
class Rendezvous {
 public:
  Rendezvous(std::string name, int group_size, int max_steps = 64);

  void enter(int rank, Matrix value);
  bool complete() const;
  // Polls up to max_steps scheduler steps; throws DeadlockError if incomplete.
  std::vector<Matrix> take();

 private:
  std::string name_;
  int max_steps_;
  std::vector<std::optional<Matrix>> slots_;
};

// In-process group of e logical tasks (ranks 1..e) advanced in lockstep.
// Per-rank containers are indexed by rank-1. Collectives reduce in a fixed
// rank order, so results are independent of the tree schedule, which only
// drives the virtual clocks.
class Communicator {
 public:
  explicit Communicator(int group_size, CostParams cost = {});

  int size() const { return size_; }
  const CostParams& cost() const { return cost_; }
  void set_cost(const CostParams& cost) { cost_ = cost; }

  const VirtualClock& clock(int rank) const;
  const std::vector<VirtualClock>& clocks() const { return clocks_; }
  double max_now() const;

  // Straggling skewness: matmul time on `rank` is multiplied by chi.
  void set_slowdown(int rank, double chi);
  double slowdown(int rank) const;

  void charge_matmul(int rank, std::uint64_t flops, bool on_behalf = false);
  void charge_elementwise(int rank, std::uint64_t flops);
  void charge_overhead(int rank, double time);
  void add_full_flops(int rank, std::uint64_t flops);
  void add_fixed_flops(int rank, std::uint64_t flops);
  // Time a matmul of `flops` would take on `rank` right now.
  double matmul_time(int rank, std::uint64_t flops) const;

  const CommCounts& counts() const { return counts_; }

  // --- collectives over the whole group -------------------------------
  std::vector<Matrix> all_reduce_sum(const std::vector<Matrix>& inputs,
                                     CommTag tag = CommTag::kModel);
  std::vector<Matrix> all_gather_concat(const std::vector<Matrix>& inputs,
                                        Axis axis,
                                        CommTag tag = CommTag::kModel);
  std::vector<double> all_gather_scalar(const std::vector<double>& values,
                                        CommTag tag = CommTag::kStats);
  double all_reduce_mean(const std::vector<double>& values,
                         CommTag tag = CommTag::kStats);
  double all_reduce_min(const std::vector<double>& values,
                        CommTag tag = CommTag::kStats);

  // --- rooted collectives over a participant subset ---------------------
  // `participants` lists ranks with the root first; an empty list means all
  // ranks with the root first, then ascending. Results are indexed by rank-1;
  // non-participants receive an empty matrix.
  std::vector<Matrix> broadcast_tree(const Matrix& value, int root,
                                     std::vector<int> participants = {},
                                     CommTag tag = CommTag::kModel);
  // `inputs` is indexed by rank-1; entries of non-participants are ignored.
  // Sums in participant order (root first).
  Matrix reduce_to_root(const std::vector<Matrix>& inputs, int root,
                        std::vector<int> participants = {},
                        CommTag tag = CommTag::kModel);
  std::vector<Matrix> scatter_serial(const Matrix& value, int root,
                                     std::vector<int> participants = {},
                                     CommTag tag = CommTag::kModel);
  Matrix gather_serial(const std::vector<Matrix>& inputs, int root,
                       std::vector<int> participants = {},
                       CommTag tag = CommTag::kModel);

 private:
  void check_rank(int rank) const;
  std::vector<int> normalize(int root, std::vector<int> participants) const;
  void check_same_shape(const std::vector<Matrix>& inputs,
                        const std::string& what) const;
  void check_participation(std::size_t n, const std::string& what) const;
  void transfer(int src, int dst, std::size_t bytes, CommTag tag);
  void note(CommTag tag, CommPattern pattern, std::size_t bytes);
  void tree_broadcast_time(const std::vector<int>& order, std::size_t bytes,
                           CommTag tag);
  // Model reductions count as elementwise work, the rest as overhead.
  void charge_reduction(int rank, std::size_t values, CommTag tag);
  void tree_reduce_time(const std::vector<int>& order, std::size_t bytes,
                        CommTag tag);
  void advance_busy(int rank, double t);

  int size_;
  CostParams cost_;
  std::vector<VirtualClock> clocks_;
  std::vector<double> chi_;
  CommCounts counts_;
};

}  // namespace tpflex
