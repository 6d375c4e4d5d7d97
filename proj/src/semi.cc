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

#include "tpflex/semi.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "tpflex/balance.h"
#include "tpflex/error.h"
#include "tpflex/log.h"
#include "tpflex/rng.h"

namespace tpflex {

PiecewiseLinear::PiecewiseLinear(
    std::vector<std::pair<double, double>> points)
    : points_(std::move(points)) {
  std::sort(points_.begin(), points_.end());
  points_.erase(std::unique(points_.begin(), points_.end(),
                            [](const auto& a, const auto& b) {
                              return a.first == b.first;
                            }),
                points_.end());
  if (points_.size() < 2) {
    throw FitError("a cost curve needs at least two distinct sample points, "
                   "got " + std::to_string(points_.size()));
  }
}

PiecewiseLinear PiecewiseLinear::zero() {
  return PiecewiseLinear({{0.0, 0.0}, {1.0, 0.0}});
}

PiecewiseLinear PiecewiseLinear::linear(double slope) {
  return PiecewiseLinear({{0.0, 0.0}, {1.0, slope}});
}

double PiecewiseLinear::operator()(double x) const {
  if (points_.empty()) return 0.0;
  std::size_t hi = 1;
  while (hi + 1 < points_.size() && x > points_[hi].first) ++hi;
  const auto& [x0, y0] = points_[hi - 1];
  const auto& [x1, y1] = points_[hi];
  if (x == x1) return y1;
  if (x == x0) return y0;
  const double y = y0 + (y1 - y0) * (x - x0) / (x1 - x0);
  return std::max(0.0, y);
}

bool CostModel::degenerate() const {
  auto flat = [](const PiecewiseLinear& f) {
    return std::all_of(f.points().begin(), f.points().end(),
                       [](const auto& p) { return p.second == 0.0; });
  };
  return omega1 == 0.0 && flat(omega2) && flat(phi1) && flat(phi2);
}

namespace {

struct Probe {
  double overhead = 0.0;
  double migration_comm = 0.0;
  double help = 0.0;
};

// One training iteration on a scratch copy with rank 1 shedding work.
Probe probe(const TPModel& base, const Batch& batch, const CostParams& cost,
            const BalanceDecision& decision, const PretestOptions& opts) {
  TPModel model = base;
  Communicator comm(model.cfg.e, cost);
  ResizeRuntime rt(model.cfg.e);
  ControlOptions co;
  co.selection = PruneSelection::kRandom;
  co.collection = opts.collection;
  co.primitive = opts.primitive;
  co.prune_cost = {cost.prune_alloc, cost.prune_col_cost};
  Rng rng(opts.seed);
  const IterationControl ctl =
      make_iteration_control(model, decision, co, nullptr, rng);
  train_iteration(model, batch, comm, ctl, rt);
  Probe p;
  p.overhead = comm.clock(1).overhead;
  // Every participant waits on the migration traffic; its cost is what the
  // busiest one pays.
  for (const VirtualClock& c : comm.clocks()) {
    p.migration_comm = std::max(p.migration_comm, c.comm_migration);
  }
  if (model.cfg.e > 1) p.help = comm.clock(2).matmul_help;
  return p;
}

}  // namespace

CostModel pretest_costs(const ModelConfig& cfg, const CostParams& cost,
                        const PretestOptions& opts) {
  std::vector<double> gammas = opts.sample_gammas;
  std::sort(gammas.begin(), gammas.end());
  gammas.erase(std::unique(gammas.begin(), gammas.end()), gammas.end());
  if (gammas.size() < 2) {
    throw FitError("pretest needs at least two sample ratios");
  }
  const TPModel model = TPModel::create(cfg, opts.seed);
  Rng rng = Rng::stream(opts.seed, 0xbeef);
  Batch batch;
  batch.x = Matrix(cfg.rows(), cfg.hs);
  for (double& v : batch.x.data()) v = rng.normal();
  for (std::size_t i = 0; i < cfg.rows(); ++i) {
    batch.labels.push_back(static_cast<int>(i % cfg.classes) + 1);
  }
  const int e = cfg.e;
  const double ref = static_cast<double>(cfg.hs);

  // Allocation overhead is the intercept of the extraction cost, read off
  // the two smallest non-empty prunes.
  auto prune_probe = [&](double ratio) {
    BalanceDecision d(e);
    d.prune_ratio[0] = ratio;
    return probe(model, batch, cost, d, opts).overhead;
  };
  const double step = 1.0 / ref;
  const double o1 = prune_probe(step);
  const double o2 = prune_probe(2.0 * step);
  CostModel cm;
  cm.omega1 = std::max(0.0, 2.0 * o1 - o2);

  std::vector<std::pair<double, double>> om2, ph1, ph2;
  for (double g : gammas) {
    const double o = g > 0.0 ? prune_probe(g) : cm.omega1;
    om2.emplace_back(ref * g, std::max(0.0, o - cm.omega1));
  }
  // Migration pays its message latency for any positive volume, so its
  // curves come from non-empty probes only (one column at the low end).
  std::vector<double> mig_gammas = {step};
  for (double g : gammas) {
    if (g > step) mig_gammas.push_back(g);
  }
  if (mig_gammas.size() < 2) mig_gammas.push_back(2.0 * step);
  for (double g : mig_gammas) {
    const double volume = ref * g;
    if (e >= 2) {
      BalanceDecision d(e);
      d.migrate_ratio[0] = g;
      const Probe p = probe(model, batch, cost, d, opts);
      ph1.emplace_back(volume, p.migration_comm);
      ph2.emplace_back(volume / (e - 1), p.help);
    } else {
      ph1.emplace_back(volume, 0.0);
      ph2.emplace_back(volume, 0.0);
    }
  }
  om2.front().second = gammas.front() == 0.0 ? 0.0 : om2.front().second;
  cm.omega2 = PiecewiseLinear(std::move(om2));
  cm.phi1 = PiecewiseLinear(std::move(ph1));
  cm.phi2 = PiecewiseLinear(std::move(ph2));
  return cm;
}

StragglerSet detect_stragglers(const std::vector<double>& times,
                               double epsilon) {
  if (times.empty()) {
    throw InputError("straggler detection needs at least one runtime");
  }
  StragglerSet out;
  out.t_min = *std::min_element(times.begin(), times.end());
  const double bar = out.t_min * (1.0 + epsilon);
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (times[i] > bar) out.ranks.push_back(static_cast<int>(i) + 1);
  }
  std::stable_sort(out.ranks.begin(), out.ranks.end(), [&](int a, int b) {
    return times[static_cast<std::size_t>(a - 1)] >
           times[static_cast<std::size_t>(b - 1)];
  });
  return out;
}

double solve_beta(double l_gamma, const CostModel& cm, int e) {
  if (e < 2) {
    throw PlanError("splitting work needs at least one helper");
  }
  if (!(l_gamma > 0.0)) {
    throw InputError("solve_beta needs a positive volume to shed");
  }
  if (cm.degenerate()) {
    log_warn("all cost curves are zero; migrating the whole volume");
    return 1.0;
  }
  const double helpers = static_cast<double>(e - 1);
  auto lhs = [&](double b) { return cm.omega1 + cm.omega2(l_gamma * (1 - b)); };
  auto rhs = [&](double b) {
    return cm.phi1(l_gamma * b) + cm.phi2(l_gamma * b / helpers);
  };
  if (lhs(1.0) >= rhs(1.0)) return 1.0;
  if (lhs(0.0) <= rhs(0.0)) return 0.0;
  double lo = 0.0, hi = 1.0;
  double mid = 0.5;
  for (int it = 0; it < 200 && hi - lo > 0.0; ++it) {
    mid = 0.5 * (lo + hi);
    const double d = lhs(mid) - rhs(mid);
    if (d == 0.0) break;
    if (d > 0.0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return mid;
}

double migrated_volume(const std::vector<RankLoad>& sorted, std::size_t x,
                       double t_min) {
  double gamma = 0.0;
  for (std::size_t k = 0; k < x && k < sorted.size(); ++k) {
    const RankLoad& s = sorted[k];
    if (s.t > 0.0) gamma += s.l * (s.t - t_min) / s.t;
  }
  return gamma;
}

double boundary_benefit(const std::vector<RankLoad>& sorted, std::size_t x,
                        double t_min, const CostModel& cm, int e) {
  if (x == 0 || x > sorted.size()) {
    throw InputError("boundary position " + std::to_string(x) +
                     " outside [1, " + std::to_string(sorted.size()) + "]");
  }
  if (static_cast<std::size_t>(e) <= x || sorted.size() <= x) {
    throw ReceiverExhaustionError(
        "no rank is left to receive migrated work with " + std::to_string(x) +
        " of " + std::to_string(e) + " ranks migrating");
  }
  const double gamma = migrated_volume(sorted, x, t_min);
  double slowest = 0.0;
  for (std::size_t y = x; y < sorted.size(); ++y) {
    slowest = std::max(slowest, sorted[y].speed);
  }
  const double per_receiver = gamma / static_cast<double>(e - x);
  return (sorted[x - 1].t - t_min) - cm.phi1(gamma) - per_receiver * slowest;
}

std::size_t group_boundary_scan(const std::vector<RankLoad>& sorted,
                                std::size_t z, double t_min,
                                const CostModel& cm, int e) {
  std::size_t x = 0;
  for (std::size_t k = 1; k <= z; ++k) {
    if (boundary_benefit(sorted, k, t_min, cm, e) <= 0.0) break;
    x = k;
  }
  return x;
}

HybridPlan build_plan(const PlanInput& in, const CostModel& cm, int e) {
  const auto ue = static_cast<std::size_t>(e);
  if (in.detect_times.size() != ue || in.stats.size() != ue ||
      in.width.size() != ue || in.speed.size() != ue) {
    throw InputError("plan inputs must cover all " + std::to_string(e) +
                     " ranks");
  }
  HybridPlan plan;
  plan.gamma.assign(ue, 0.0);
  plan.migrate_share.assign(ue, 0.0);
  plan.criterion.assign(ue, Criterion::kAvg);
  const StragglerSet s = detect_stragglers(in.detect_times, in.epsilon);
  plan.t_min = s.t_min;
  plan.z = s.z();
  plan.stragglers = s.ranks;
  if (s.z() == 0) return plan;

  if (s.z() == 1 && !in.forced_lambda) {
    const int r = s.ranks.front();
    const auto i = static_cast<std::size_t>(r - 1);
    plan.mode = PlanMode::kSingle;
    plan.gamma[i] = compute_gamma(in.stats[i], Criterion::kAvg, in.gamma_max);
    plan.beta = plan.gamma[i] > 0.0 && e >= 2
                    ? solve_beta(in.width[i] * plan.gamma[i], cm, e)
                    : 0.0;
    plan.migrate_share[i] = plan.beta;
    if (plan.beta > 0.0) plan.migration_group.push_back(r);
    if (plan.beta < 1.0) plan.resize_group.push_back(r);
    plan.x = plan.migration_group.size();
    return plan;
  }

  plan.mode = PlanMode::kMulti;
  std::vector<RankLoad> sorted;
  for (int r : s.ranks) {
    const auto i = static_cast<std::size_t>(r - 1);
    sorted.push_back({r, in.detect_times[i], in.width[i], in.speed[i]});
  }
  std::vector<int> rest;
  for (int r = 1; r <= e; ++r) {
    if (std::find(s.ranks.begin(), s.ranks.end(), r) == s.ranks.end()) {
      rest.push_back(r);
    }
  }
  std::stable_sort(rest.begin(), rest.end(), [&](int a, int b) {
    return in.detect_times[static_cast<std::size_t>(a - 1)] >
           in.detect_times[static_cast<std::size_t>(b - 1)];
  });
  for (int r : rest) {
    const auto i = static_cast<std::size_t>(r - 1);
    sorted.push_back({r, in.detect_times[i], in.width[i], in.speed[i]});
  }
  plan.x = in.forced_lambda
               ? std::min(*in.forced_lambda, s.z())
               : group_boundary_scan(sorted, s.z(), s.t_min, cm, e);
  for (std::size_t k = 0; k < s.z(); ++k) {
    const int r = s.ranks[k];
    const auto i = static_cast<std::size_t>(r - 1);
    plan.criterion[i] = Criterion::kMin;
    plan.gamma[i] = compute_gamma(in.stats[i], Criterion::kMin, in.gamma_max);
    if (k < plan.x) {
      plan.migration_group.push_back(r);
      plan.migrate_share[i] = 1.0;
    } else {
      plan.resize_group.push_back(r);
    }
  }
  return plan;
}

}  // namespace tpflex
