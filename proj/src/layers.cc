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

#include "tpflex/layers.h"

#include <algorithm>
#include <string>
#include <utility>

#include "tpflex/error.h"

namespace tpflex {
namespace {

std::size_t idx(int rank) { return static_cast<std::size_t>(rank - 1); }

// Elementwise work that only exists because of balancing (imputation,
// accumulating collected blocks) is booked as overhead.
void charge_balancing(Communicator& comm, int rank, std::size_t values) {
  comm.charge_overhead(
      rank, static_cast<double>(values) / comm.cost().compute_rate);
}

// Rows of the straggler's shard that leave through `plan`, and per rank the
// row range it computes as a helper.
struct PlanView {
  const MigrationPlan* plan = nullptr;
  std::size_t base = 0;  // first migrated row of the straggler's shard
  std::vector<int> participants;
};

std::vector<PlanView> view_plans(const TPLinear& layer,
                                 const LayerControl& ctl, int e) {
  std::vector<PlanView> views;
  std::vector<bool> is_straggler(static_cast<std::size_t>(e), false);
  const std::size_t width = layer.width();
  for (const MigrationPlan& plan : ctl.migrations) {
    if (plan.empty()) continue;
    if (plan.straggler < 1 || plan.straggler > e) {
      throw PlanError("layer " + layer.name + ": straggler rank " +
                      std::to_string(plan.straggler) + " outside [1, " +
                      std::to_string(e) + "]");
    }
    if (is_straggler[idx(plan.straggler)]) {
      throw PlanError("layer " + layer.name + ": two plans for straggler " +
                      std::to_string(plan.straggler));
    }
    is_straggler[idx(plan.straggler)] = true;
    if (plan.l_mig > width) {
      throw PlanError("layer " + layer.name + ": L_mig " +
                      std::to_string(plan.l_mig) + " exceeds shard width " +
                      std::to_string(width));
    }
    std::size_t covered = 0;
    for (const HelperAssignment& h : plan.helpers) {
      if (h.rank < 1 || h.rank > e || h.rank == plan.straggler) {
        throw PlanError("layer " + layer.name + ": invalid helper rank " +
                        std::to_string(h.rank));
      }
      if (h.begin != covered) {
        throw PlanError("layer " + layer.name +
                        ": helper intervals are not contiguous");
      }
      covered += h.count;
    }
    if (covered != plan.l_mig) {
      throw PlanError("layer " + layer.name + ": helpers cover " +
                      std::to_string(covered) + " of " +
                      std::to_string(plan.l_mig) + " migrated columns");
    }
    views.push_back({&plan, width - plan.l_mig, plan.participants()});
  }
  return views;
}

std::vector<std::size_t> migrated_rows(const std::vector<PlanView>& views,
                                       int e) {
  std::vector<std::size_t> out(static_cast<std::size_t>(e), 0);
  for (const PlanView& v : views) out[idx(v.plan->straggler)] = v.plan->l_mig;
  return out;
}

void collect_explicit(Communicator& comm, const PlanView& v,
                      std::vector<Matrix> contributions, Matrix& target,
                      std::size_t col_offset, bool add, LayerAudit* audit) {
  const MigrationPlan& plan = *v.plan;
  const int root = plan.straggler;
  Matrix total =
      plan.primitive == MigrationPrimitive::kScatterGather
          ? comm.gather_serial(contributions, root, v.participants,
                               CommTag::kMigration)
          : comm.reduce_to_root(contributions, root, v.participants,
                                CommTag::kMigration);
  if (audit) ++audit->explicit_reduces;
  if (add) {
    Matrix slot = target.col_block(col_offset, col_offset + total.cols());
    slot += total;
    target.set_col_block(col_offset, slot);
    charge_balancing(comm, root, total.size());
  } else {
    target.set_col_block(col_offset, total);
  }
}

void send_block(Communicator& comm, const PlanView& v, const Matrix& block) {
  if (v.plan->primitive == MigrationPrimitive::kScatterGather) {
    comm.scatter_serial(block, v.plan->straggler, v.participants,
                        CommTag::kMigration);
  } else {
    comm.broadcast_tree(block, v.plan->straggler, v.participants,
                        CommTag::kMigration);
  }
}

bool uses_merge(const PlanView& v) {
  return v.plan->collection == CollectionMode::kMerged &&
         v.plan->primitive == MigrationPrimitive::kBroadcastReduce;
}

std::string history_key(const TPLinear& layer) {
  return layer.name + "/grad_input";
}

}  // namespace

std::size_t TPLinear::width() const {
  return shards.empty() ? 0 : shards.front().rows();
}

std::size_t TPLinear::contraction() const {
  return shards.empty() ? 0 : shards.front().cols();
}

Matrix TPLinear::dense() const {
  if (shards.empty()) return {};
  const std::size_t e = shards.size();
  if (mode == LinearMode::kColumn) {
    Matrix out(width() * e, contraction());
    for (std::size_t r = 0; r < e; ++r) {
      out.set_row_block(r * width(), shards[r]);
    }
    return out;
  }
  Matrix out(width(), contraction() * e);
  for (std::size_t r = 0; r < e; ++r) {
    out.set_col_block(r * contraction(), shards[r]);
  }
  return out;
}

TPLinear TPLinear::from_dense(LinearMode mode, std::string name,
                              const Matrix& dense, int e) {
  if (e < 1) {
    throw RankError("parallel degree must be at least 1");
  }
  const auto ue = static_cast<std::size_t>(e);
  TPLinear layer;
  layer.mode = mode;
  layer.name = std::move(name);
  layer.d_out = dense.rows();
  layer.d_in = dense.cols();
  const std::size_t split = mode == LinearMode::kColumn ? dense.rows()
                                                        : dense.cols();
  if (split % ue != 0) {
    throw ShapeError("layer " + layer.name + ": dimension " +
                     std::to_string(split) + " not divisible by " +
                     std::to_string(e));
  }
  const std::size_t part = split / ue;
  for (std::size_t r = 0; r < ue; ++r) {
    layer.shards.push_back(mode == LinearMode::kColumn
                               ? dense.row_block(r * part, (r + 1) * part)
                               : dense.col_block(r * part, (r + 1) * part));
  }
  return layer;
}

bool LayerControl::active() const {
  if (!migrations.empty()) return true;
  return std::any_of(prune.begin(), prune.end(),
                     [](const IndexSet& p) { return !p.empty(); });
}

const IndexSet& LayerControl::prune_for(int rank) const {
  static const IndexSet kNone;
  if (prune.empty()) return kNone;
  return prune.at(idx(rank));
}

void ResizeRuntime::clear_lineage() {
  for (auto& t : lineage) t.clear();
}

LayerAudit& LayerAudit::operator+=(const LayerAudit& o) {
  pruned_matmuls += o.pruned_matmuls;
  imputations += o.imputations;
  migrated_matmuls += o.migrated_matmuls;
  explicit_reduces += o.explicit_reduces;
  merged_collections += o.merged_collections;
  return *this;
}

void migrate_collection_merged(std::vector<Matrix>& partials,
                               const std::vector<Matrix>& helper_blocks,
                               const std::vector<std::size_t>& col_offset,
                               const MigrationPlan& plan,
                               bool followed_by_all_reduce) {
  if (!followed_by_all_reduce) {
    throw MergeContextError(
        "merged collection needs a following all-reduce on the same tensor");
  }
  for (const HelperAssignment& h : plan.helpers) {
    if (h.count == 0) continue;
    const Matrix& block = helper_blocks.at(idx(h.rank));
    Matrix& own = partials.at(idx(h.rank));
    const std::size_t off = col_offset.at(idx(h.rank));
    Matrix slot = own.col_block(off, off + block.cols());
    slot += block;
    own.set_col_block(off, slot);
  }
}

std::vector<Matrix> linear_forward(const TPLinear& layer,
                                   const std::vector<Matrix>& x,
                                   Communicator& comm, const LayerControl& ctl,
                                   ResizeRuntime& rt, LinearSaved& saved,
                                   LayerAudit* audit) {
  const int e = comm.size();
  if (layer.shards.size() != static_cast<std::size_t>(e) ||
      x.size() != static_cast<std::size_t>(e)) {
    throw ShapeError("layer " + layer.name + ": expected " +
                     std::to_string(e) + " shards and inputs");
  }
  const bool column = layer.mode == LinearMode::kColumn;
  const std::size_t width = layer.width();
  for (int r = 1; r <= e; ++r) {
    if (x[idx(r)].cols() != layer.shards[idx(r)].cols()) {
      throw ShapeError("layer " + layer.name + ": rank " + std::to_string(r) +
                       " input " + x[idx(r)].shape_string() + " vs shard " +
                       layer.shards[idx(r)].shape_string());
    }
  }
  const auto views = view_plans(layer, ctl, e);
  const auto mig = migrated_rows(views, e);
  saved.input = x;
  saved.weight_block.assign(views.size(), {});
  saved.input_block.assign(views.size(), {});

  // The straggler first ships what the helpers lack.
  for (std::size_t p = 0; p < views.size(); ++p) {
    const PlanView& v = views[p];
    const Matrix& w = layer.shards[idx(v.plan->straggler)];
    saved.weight_block[p] = w.row_block(v.base, width);
    if (!column) {
      saved.input_block[p] = x[idx(v.plan->straggler)];
      send_block(comm, v, saved.input_block[p]);
    }
    send_block(comm, v, saved.weight_block[p]);
  }

  std::vector<Matrix> out(static_cast<std::size_t>(e));
  for (int r = 1; r <= e; ++r) {
    const Matrix& xr = x[idx(r)];
    const Matrix& w = layer.shards[idx(r)];
    const std::size_t n = xr.rows();
    const std::size_t keep = width - mig[idx(r)];
    out[idx(r)] = Matrix(n, column ? width : layer.d_out);
    comm.add_full_flops(r, matmul_flops(n, w.cols(), width));
    if (keep == 0) continue;
    const Matrix w_keep = keep == width ? w : w.row_block(0, keep);
    const IndexSet& pr = ctl.prune_for(r);
    WorkCounter acc;
    Matrix y;
    if (ctl.active()) {
      if (!pr.empty()) {
        comm.charge_overhead(r, ctl.prune_cost.of(pr.size(), n) +
                                    ctl.prune_cost.of(pr.size(), keep));
        if (audit) ++audit->pruned_matmuls;
      }
      y = pruned_local_forward(layer.name, xr, w_keep, pr, rt.lineage[idx(r)],
                               acc);
    } else {
      y = matmul_nt(xr, w_keep, acc);
    }
    comm.charge_matmul(r, acc.flops);
    out[idx(r)].set_col_block(0, y);
  }

  for (std::size_t p = 0; p < views.size(); ++p) {
    const PlanView& v = views[p];
    const MigrationPlan& plan = *v.plan;
    const Matrix& xs = column ? x[idx(plan.straggler)] : saved.input_block[p];
    std::vector<Matrix> blocks(static_cast<std::size_t>(e));
    std::vector<std::size_t> offsets(static_cast<std::size_t>(e), 0);
    for (const HelperAssignment& h : plan.helpers) {
      if (h.count == 0) continue;
      WorkCounter acc;
      const Matrix part = matmul_nt(
          xs, saved.weight_block[p].row_block(h.begin, h.begin + h.count),
          acc);
      comm.charge_matmul(h.rank, acc.flops, /*on_behalf=*/true);
      offsets[idx(h.rank)] = v.base + h.begin;
      if (!column && uses_merge(v)) {
        blocks[idx(h.rank)] = part;
      } else {
        Matrix full(part.rows(), plan.l_mig);
        full.set_col_block(h.begin, part);
        blocks[idx(h.rank)] = std::move(full);
      }
    }
    if (audit) ++audit->migrated_matmuls;
    if (!column && uses_merge(v)) {
      migrate_collection_merged(out, blocks, offsets, plan, true);
      for (const HelperAssignment& h : plan.helpers) {
        if (h.count > 0) {
          charge_balancing(comm, h.rank, blocks[idx(h.rank)].size());
        }
      }
      if (audit) ++audit->merged_collections;
    } else {
      blocks[idx(plan.straggler)] = Matrix(xs.rows(), plan.l_mig);
      collect_explicit(comm, v, std::move(blocks), out[idx(plan.straggler)],
                       v.base, /*add=*/false, audit);
    }
  }
  return out;
}

LinearGrads linear_backward(const TPLinear& layer, const LinearSaved& saved,
                            const std::vector<Matrix>& grad_output,
                            Communicator& comm, const LayerControl& ctl,
                            ResizeRuntime& rt, LayerAudit* audit) {
  const int e = comm.size();
  const bool column = layer.mode == LinearMode::kColumn;
  const std::size_t width = layer.width();
  if (grad_output.size() != static_cast<std::size_t>(e) ||
      saved.input.size() != static_cast<std::size_t>(e)) {
    throw ShapeError("layer " + layer.name + ": expected " +
                     std::to_string(e) + " upstream gradients");
  }
  for (int r = 1; r <= e; ++r) {
    const Matrix& g = grad_output[idx(r)];
    const std::size_t expect = column ? width : layer.d_out;
    if (g.rows() != saved.input[idx(r)].rows() || g.cols() != expect) {
      throw ShapeError("layer " + layer.name + ": rank " + std::to_string(r) +
                       " upstream gradient " + g.shape_string());
    }
  }
  const auto views = view_plans(layer, ctl, e);
  if (views.size() != saved.weight_block.size()) {
    throw PlanError("layer " + layer.name +
                    ": backward plans differ from forward plans");
  }
  const auto mig = migrated_rows(views, e);

  // Column mode: the helpers still lack the straggler's output-gradient
  // columns. Row mode: the upstream gradient is replicated already.
  std::vector<Matrix> g_block(views.size());
  for (std::size_t p = 0; p < views.size(); ++p) {
    const PlanView& v = views[p];
    g_block[p] = grad_output[idx(v.plan->straggler)].col_block(v.base, width);
    if (column) send_block(comm, v, g_block[p]);
  }

  LinearGrads grads;
  grads.grad_input.resize(static_cast<std::size_t>(e));
  grads.grad_weight.resize(static_cast<std::size_t>(e));
  for (int r = 1; r <= e; ++r) {
    const Matrix& xr = saved.input[idx(r)];
    const Matrix& w = layer.shards[idx(r)];
    const Matrix& g = grad_output[idx(r)];
    const std::size_t n = xr.rows();
    const std::size_t keep = width - mig[idx(r)];
    grads.grad_weight[idx(r)] = Matrix(width, w.cols());
    grads.grad_input[idx(r)] = Matrix(n, w.cols());
    comm.add_full_flops(r, 2 * matmul_flops(n, w.cols(), width));
    if (keep == 0) continue;
    const Matrix w_keep = keep == width ? w : w.row_block(0, keep);
    const Matrix g_keep = keep == g.cols() ? g : g.col_block(0, keep);
    const IndexSet& pr = ctl.prune_for(r);
    WorkCounter acc;
    Matrix gw, gi;
    if (ctl.active()) {
      const bool same = ctl.imputation == ImputationPolicy::kSame;
      const Matrix* prev = nullptr;
      if (same) {
        auto it = rt.history[idx(r)].find(history_key(layer));
        if (it != rt.history[idx(r)].end()) prev = &it->second;
      }
      if (!pr.empty()) {
        comm.charge_overhead(r, ctl.prune_cost.of(pr.size(), n) +
                                    ctl.prune_cost.of(pr.size(), keep));
        if (audit) {
          audit->pruned_matmuls += 2;
          audit->imputations += 2;
        }
      }
      LocalGrads local =
          pruned_local_backward(layer.name, xr, w_keep, g_keep,
                                rt.lineage[idx(r)], ctl.imputation, prev, acc);
      gw = std::move(local.grad_weight);
      gi = std::move(local.grad_input);
      if (pr.size() > 0) charge_balancing(comm, r, gw.size() + gi.size());
    } else {
      gw = matmul_tn(g_keep, xr, acc);
      gi = matmul(g_keep, w_keep, acc);
    }
    comm.charge_matmul(r, acc.flops);
    grads.grad_weight[idx(r)].set_row_block(0, gw);
    grads.grad_input[idx(r)] = std::move(gi);
  }
  if (rt.keep_history) {
    for (int r = 1; r <= e; ++r) {
      rt.history[idx(r)][history_key(layer)] = grads.grad_input[idx(r)];
    }
  }

  for (std::size_t p = 0; p < views.size(); ++p) {
    const PlanView& v = views[p];
    const MigrationPlan& plan = *v.plan;
    const int s = plan.straggler;
    const Matrix& xs = column ? saved.input[idx(s)] : saved.input_block[p];
    const std::size_t k = xs.cols();
    std::vector<Matrix> gw_blocks(static_cast<std::size_t>(e));
    std::vector<Matrix> gi_blocks(static_cast<std::size_t>(e));
    for (const HelperAssignment& h : plan.helpers) {
      if (h.count == 0) continue;
      const Matrix gsub = g_block[p].col_block(h.begin, h.begin + h.count);
      const Matrix wsub =
          saved.weight_block[p].row_block(h.begin, h.begin + h.count);
      WorkCounter acc;
      const Matrix gw_part = matmul_tn(gsub, xs, acc);
      gi_blocks[idx(h.rank)] = matmul(gsub, wsub, acc);
      comm.charge_matmul(h.rank, acc.flops, /*on_behalf=*/true);
      // Rows of grad_W travel as columns of its transpose so that every
      // collection places column blocks.
      Matrix full(k, plan.l_mig);
      full.set_col_block(h.begin, gw_part.transpose());
      gw_blocks[idx(h.rank)] = std::move(full);
    }
    if (audit) audit->migrated_matmuls += 2;

    Matrix gw_t = grads.grad_weight[idx(s)].transpose();
    gw_blocks[idx(s)] = Matrix(k, plan.l_mig);
    collect_explicit(comm, v, std::move(gw_blocks), gw_t, v.base,
                     /*add=*/false, audit);
    grads.grad_weight[idx(s)] = gw_t.transpose();

    gi_blocks[idx(s)] = Matrix(xs.rows(), k);
    if (column && uses_merge(v)) {
      std::vector<std::size_t> offsets(static_cast<std::size_t>(e), 0);
      migrate_collection_merged(grads.grad_input, gi_blocks, offsets, plan,
                                true);
      for (const HelperAssignment& h : plan.helpers) {
        if (h.count > 0) {
          charge_balancing(comm, h.rank, gi_blocks[idx(h.rank)].size());
        }
      }
      if (audit) ++audit->merged_collections;
    } else {
      collect_explicit(comm, v, std::move(gi_blocks), grads.grad_input[idx(s)],
                       0, /*add=*/true, audit);
    }
  }
  return grads;
}

std::vector<Matrix> tp_linear_forward(const TPLinear& layer,
                                      const std::vector<Matrix>& x,
                                      Communicator& comm) {
  ResizeRuntime rt(comm.size());
  LinearSaved saved;
  return linear_forward(layer, x, comm, LayerControl{}, rt, saved);
}

LinearGrads tp_linear_backward(const TPLinear& layer,
                               const std::vector<Matrix>& x_saved,
                               const std::vector<Matrix>& grad_output,
                               Communicator& comm) {
  ResizeRuntime rt(comm.size());
  LinearSaved saved;
  saved.input = x_saved;
  LinearGrads grads =
      linear_backward(layer, saved, grad_output, comm, LayerControl{}, rt);
  if (layer.mode == LinearMode::kColumn) {
    grads.grad_input = comm.all_reduce_sum(grads.grad_input);
  }
  return grads;
}

}  // namespace tpflex
