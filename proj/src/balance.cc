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

#include "tpflex/balance.h"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace tpflex {

bool BalanceDecision::idle() const {
  auto zero = [](double v) { return v <= 0.0; };
  return std::all_of(prune_ratio.begin(), prune_ratio.end(), zero) &&
         std::all_of(migrate_ratio.begin(), migrate_ratio.end(), zero);
}

std::size_t migrate_count(std::size_t width, double ratio) {
  if (ratio <= 0.0) return 0;
  const auto n = static_cast<std::size_t>(
      std::floor(static_cast<double>(width) * ratio + 0.5));
  return std::min(n, width);
}

IndexSet random_columns(std::size_t cols, std::size_t count, Rng& rng) {
  count = std::min(count, cols);
  std::vector<std::size_t> pool(cols);
  std::iota(pool.begin(), pool.end(), std::size_t{1});
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(cols - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(count);
  std::sort(pool.begin(), pool.end());
  return IndexSet(std::move(pool));
}

IterationControl make_iteration_control(
    const TPModel& model, const BalanceDecision& decision,
    const ControlOptions& opts, const std::vector<PriorityState>* priority,
    Rng& rng) {
  IterationControl ctl;
  if (decision.idle()) return ctl;
  const int e = model.cfg.e;
  std::vector<int> no_help;
  for (int r = 1; r <= e; ++r) {
    if (!decision.may_help[static_cast<std::size_t>(r - 1)]) {
      no_help.push_back(r);
    }
  }
  for (std::size_t k = 0; k < model.num_layers(); ++k) {
    const TPLinear& layer = model.layer(k);
    LayerControl lc;
    lc.imputation = opts.imputation;
    lc.prune_cost = opts.prune_cost;
    lc.prune.assign(static_cast<std::size_t>(e), IndexSet());
    for (int r = 1; r <= e; ++r) {
      const auto i = static_cast<std::size_t>(r - 1);
      const double gamma = decision.prune_ratio[i];
      if (gamma > 0.0) {
        const std::size_t cols = layer.contraction();
        if (opts.selection == PruneSelection::kRandom || priority == nullptr) {
          lc.prune[i] = random_columns(cols, prune_count(cols, gamma), rng);
        } else {
          const PriorityState& ps = (*priority)[i];
          const bool diff =
              opts.selection == PruneSelection::kPriorityDifferentiated;
          lc.prune[i] =
              ps.select(k, ps.layer_gamma(k, gamma, diff, opts.priority));
        }
      }
      const std::size_t l_mig =
          migrate_count(layer.width(), decision.migrate_ratio[i]);
      if (l_mig > 0) {
        std::vector<int> excluded;
        for (int x : no_help) {
          if (x != r) excluded.push_back(x);
        }
        MigrationPlan plan = plan_migration(r, l_mig, e, excluded);
        plan.collection = opts.collection;
        plan.primitive = opts.primitive;
        lc.migrations.push_back(std::move(plan));
      }
    }
    ctl.layers.push_back(std::move(lc));
  }
  return ctl;
}

std::vector<PriorityState> make_priority_states(const TPModel& model) {
  std::vector<PriorityState> out;
  for (int r = 1; r <= model.cfg.e; ++r) {
    std::vector<std::pair<std::size_t, std::size_t>> dims;
    for (std::size_t k = 0; k < model.num_layers(); ++k) {
      const Matrix& w = model.layer(k).shards[static_cast<std::size_t>(r - 1)];
      dims.emplace_back(w.rows(), w.cols());
    }
    out.emplace_back(dims);
  }
  return out;
}

std::vector<Matrix> local_weights(const TPModel& model, int rank) {
  std::vector<Matrix> out;
  for (std::size_t k = 0; k < model.num_layers(); ++k) {
    out.push_back(model.layer(k).shards.at(static_cast<std::size_t>(rank - 1)));
  }
  return out;
}

}  // namespace tpflex
