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

#include "tpflex/resize.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tpflex/error.h"

namespace tpflex {

std::string to_string(Criterion c) {
  return c == Criterion::kAvg ? "avg" : "min";
}

double raw_gamma(const TimingStats& stats, Criterion criterion) {
  if (!(stats.m_own > 0.0)) {
    throw NoMatmulBaselineError(
        "pruning ratio needs a positive matmul runtime, got " +
        std::to_string(stats.m_own));
  }
  const double target = criterion == Criterion::kAvg ? stats.t_avg : stats.t_min;
  return (stats.t_own - target) / stats.m_own;
}

double compute_gamma(const TimingStats& stats, Criterion criterion,
                     double gamma_max) {
  return std::clamp(raw_gamma(stats, criterion), 0.0, gamma_max);
}

bool maybe_refresh_group_stats(std::vector<TimingStats>& stats,
                               Communicator& comm, double threshold) {
  bool trigger = false;
  for (const auto& s : stats) {
    if (!s.last_refreshed_t.has_value() || *s.last_refreshed_t <= 0.0 ||
        std::abs(s.t_own - *s.last_refreshed_t) / *s.last_refreshed_t >
            threshold) {
      trigger = true;
    }
  }
  if (!trigger) {
    return false;
  }
  std::vector<double> t(stats.size());
  std::transform(stats.begin(), stats.end(), t.begin(),
                 [](const TimingStats& s) { return s.t_own; });
  const double avg = comm.all_reduce_mean(t, CommTag::kStats);
  const double mn = comm.all_reduce_min(t, CommTag::kStats);
  for (auto& s : stats) {
    s.t_avg = avg;
    s.t_min = mn;
    s.last_refreshed_t = s.t_own;
  }
  return true;
}

std::size_t prune_count(std::size_t cols, double gamma) {
  if (cols == 0 || !(gamma > 0.0)) {
    return 0;
  }
  const auto k = static_cast<std::size_t>(
      std::floor(static_cast<double>(cols) * gamma + 0.5));
  return std::min(k, cols - 1);
}

IndexSet select_smallest(const std::vector<double>& values, std::size_t k) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     return values[a] < values[b];
                   });
  k = std::min(k, order.size());
  std::vector<std::size_t> picked;
  picked.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    picked.push_back(order[i] + 1);
  }
  return IndexSet(std::move(picked));
}

void LineageTable::record(const std::string& layer, const std::string& matrix,
                          IndexSet pruned) {
  if (contains(layer, matrix)) {
    throw StateCorruptionError("lineage already holds <" + layer + ", " +
                               matrix + "> for this iteration");
  }
  entries_.push_back({layer, matrix, std::move(pruned)});
}

bool LineageTable::contains(const std::string& layer,
                            const std::string& matrix) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const auto& e) {
    return e.layer == layer && e.matrix == matrix;
  });
}

const IndexSet& LineageTable::lookup(const std::string& layer,
                                     const std::string& matrix) const {
  for (const auto& e : entries_) {
    if (e.layer == layer && e.matrix == matrix) {
      return e.pruned;
    }
  }
  throw LineageMissError("no lineage entry for <" + layer + ", " + matrix +
                         ">");
}

PriorityState::PriorityState(
    const std::vector<std::pair<std::size_t, std::size_t>>& dims) {
  layers_.reserve(dims.size());
  for (const auto& [rows, cols] : dims) {
    LayerPriority lp;
    lp.rows = rows;
    lp.cols = cols;
    lp.w_var.assign(cols, std::numeric_limits<double>::infinity());
    layers_.push_back(std::move(lp));
  }
}

void PriorityState::note_pruned(std::size_t k, const IndexSet& pruned) {
  auto& lp = layers_.at(k);
  if (pruned.empty()) {
    return;
  }
  std::vector<std::size_t> merged;
  std::set_union(lp.pruned_since_update.indices().begin(),
                 lp.pruned_since_update.indices().end(),
                 pruned.indices().begin(), pruned.indices().end(),
                 std::back_inserter(merged));
  lp.pruned_since_update = IndexSet(std::move(merged));
}

IndexSet PriorityState::select(std::size_t k, double gamma) const {
  const auto& lp = layers_.at(k);
  return select_smallest(lp.w_var, prune_count(lp.cols, gamma));
}

double PriorityState::layer_gamma(std::size_t k, double gamma_uniform,
                                  bool differentiated,
                                  const PriorityConfig& cfg) const {
  double g = gamma_uniform;
  if (differentiated && layers_.at(k).measured) {
    g = std::max(layers_.at(k).gamma_variation, cfg.alpha * gamma_uniform);
  }
  return std::clamp(g, 0.0, cfg.gamma_max);
}

std::pair<PriorityState, ResizePlan> epoch_priority_update(
    const PriorityState& state, const std::vector<Matrix>& w_new,
    const std::vector<Matrix>& w_old, double gamma_uniform,
    const PriorityConfig& cfg, bool differentiated) {
  if (w_new.size() != state.num_layers() || w_old.size() != state.num_layers()) {
    throw StateCorruptionError(
        "priority state tracks " + std::to_string(state.num_layers()) +
        " layers but received " + std::to_string(w_new.size()) + "/" +
        std::to_string(w_old.size()) + " weight snapshots");
  }
  PriorityState next = state;
  ResizePlan plan;
  plan.gamma_uniform = gamma_uniform;
  const double theta = cfg.theta();
  for (std::size_t k = 0; k < state.num_layers(); ++k) {
    auto& lp = next.layer(k);
    for (const Matrix* w : {&w_new[k], &w_old[k]}) {
      if (w->rows() != lp.rows || w->cols() != lp.cols) {
        throw StateCorruptionError("layer " + std::to_string(k) +
                                   " weight shape drifted to " +
                                   w->shape_string());
      }
    }
    const auto delta = column_delta(w_new[k], w_old[k]);
    std::vector<double> carried = delta;
    if (cfg.incremental) {
      for (std::size_t idx : lp.pri_list.indices()) {
        carried[idx - 1] = lp.w_var[idx - 1];
      }
      for (std::size_t idx : lp.pruned_since_update.indices()) {
        carried[idx - 1] = lp.w_var[idx - 1];
      }
    }
    lp.w_var = std::move(carried);
    const auto l_uni = static_cast<std::size_t>(std::count_if(
        lp.w_var.begin(), lp.w_var.end(), [&](double d) { return d > theta; }));
    lp.gamma_variation =
        1.0 - static_cast<double>(l_uni) / static_cast<double>(lp.cols);
    lp.measured = true;
    const double g = next.layer_gamma(k, gamma_uniform, differentiated, cfg);
    lp.pri_list = select_smallest(lp.w_var, prune_count(lp.cols, g));
    lp.pruned_since_update = IndexSet();
    plan.layer_gamma.push_back(g);
    plan.prune.push_back(lp.pri_list);
  }
  return {std::move(next), std::move(plan)};
}

Matrix pruned_local_forward(const std::string& layer, const Matrix& x,
                            const Matrix& w, const IndexSet& pruned,
                            LineageTable& lineage, WorkCounter& acc) {
  if (x.cols() != w.cols()) {
    throw ShapeError("pruned forward of " + layer + ": input " +
                     x.shape_string() + " vs weight " + w.shape_string());
  }
  lineage.record(layer, "input", pruned);
  lineage.record(layer, "weight", pruned);
  if (pruned.empty()) {
    return matmul_nt(x, w, acc);
  }
  return matmul_nt(prune_columns(x, pruned), prune_columns(w, pruned), acc);
}

LocalGrads pruned_local_backward(const std::string& layer, const Matrix& x,
                                 const Matrix& w, const Matrix& g,
                                 const LineageTable& lineage,
                                 ImputationPolicy policy, const Matrix* prev,
                                 WorkCounter& acc) {
  const IndexSet& p_in = lineage.lookup(layer, "input");
  const IndexSet& p_w = lineage.lookup(layer, "weight");
  if (g.rows() != x.rows() || g.cols() != w.rows()) {
    throw ShapeError("pruned backward of " + layer + ": upstream gradient " +
                     g.shape_string() + " vs input " + x.shape_string() +
                     " and weight " + w.shape_string());
  }
  const std::size_t k = x.cols();
  LocalGrads out;
  if (p_in.empty() && p_w.empty()) {
    out.grad_weight = matmul_tn(g, x, acc);
    out.grad_input = matmul(g, w, acc);
    return out;
  }
  out.grad_weight = impute_columns(matmul_tn(g, prune_columns(x, p_in), acc),
                                   p_in, k, ImputationPolicy::kZero);
  out.grad_input = impute_columns(matmul(g, prune_columns(w, p_w), acc), p_w,
                                  k, policy, prev);
  return out;
}

}  // namespace tpflex
