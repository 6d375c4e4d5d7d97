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

// Acceptance gate: one PASS/FAIL line per criterion. Criterion 12 is
// reported but never fails the run.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "helpers.h"
#include "oracles.h"
#include "tpflex/balance.h"
#include "tpflex/error.h"
#include "tpflex/experiment.h"
#include "tpflex/log.h"
#include "tpflex/resize.h"
#include "tpflex/semi.h"

namespace tpflex {
namespace {

using testing::max_over;
using testing::random_batch;
using testing::random_matrix;

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      if (!detail.empty()) detail += "; ";
      detail += what;
    }
  }
  void note(const std::string& what) {
    if (!detail.empty()) detail += "; ";
    detail += what;
  }
};

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

// Realistic flop-to-byte ratio for the trend experiments.
CostParams trend_cost() {
  CostParams c;
  c.compute_rate = 1000.0;
  c.alpha = 0.1;
  c.beta_net = 1e-6;
  return c;
}

// --- 1: tensor-parallel equivalence --------------------------------------

std::vector<Matrix> train_plain(int e, int iterations, std::uint64_t seed) {
  ModelConfig cfg;
  cfg.depth = 2;
  cfg.hs = 16;
  cfg.e = e;
  TPModel model = TPModel::create(cfg, seed);
  Communicator comm(e);
  ResizeRuntime rt(e);
  for (int it = 0; it < iterations; ++it) {
    train_iteration(model, random_batch(cfg, seed + 1000 + it), comm, {}, rt);
  }
  return model.dense_weights();
}

Outcome criterion1() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<Matrix> dense = train_plain(1, 5, 2024);
  for (int e : {2, 4}) {
    const double d = max_over(train_plain(e, 5, 2024), dense);
    o.require(d <= 1e-9, "e=" + std::to_string(e) + " differs by " + num(d));
    o.note("e=" + std::to_string(e) + " max diff " + num(d));
  }
  const double secs = seconds_since(t0);
  o.require(secs < 10.0, "took " + num(secs) + " s");
  return o;
}

// --- 2: gradient check ----------------------------------------------------

Outcome criterion2() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  ModelConfig cfg;
  cfg.depth = 2;
  cfg.hs = 8;
  cfg.e = 2;
  const TPModel model = TPModel::create(cfg, 77);
  const Batch batch = random_batch(cfg, 78);
  Communicator comm(cfg.e);
  ResizeRuntime rt(cfg.e);
  const ModelGrads grads = compute_gradients(model, batch, comm, {}, rt);
  Rng rng = Rng::stream(79, 0);
  const double h = 1e-5;
  double worst = 0.0;
  for (int n = 0; n < 32; ++n) {
    const std::size_t layer = rng.below(model.num_layers() + 1);
    const bool head = layer == model.num_layers();
    Matrix analytic;
    if (head) {
      analytic = grads.head;
    } else {
      TPLinear g = model.layer(layer);
      g.shards = grads.layers[layer];
      analytic = g.dense();
    }
    const std::size_t at = rng.below(analytic.size());
    auto loss_at = [&](double delta) {
      TPModel m = model;
      if (head) {
        m.head.data()[at] += delta;
      } else {
        const TPLinear& old = model.layer(layer);
        Matrix w = old.dense();
        w.data()[at] += delta;
        m.layer(layer) = TPLinear::from_dense(old.mode, old.name, w, cfg.e);
      }
      return testing::dense_loss(m, batch);
    };
    const double fd = (loss_at(h) - loss_at(-h)) / (2.0 * h);
    const double a = analytic.data()[at];
    const double rel = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-8});
    worst = std::max(worst, rel);
  }
  o.require(worst <= 1e-5, "relative error " + num(worst));
  o.note("32 coordinates, worst relative error " + num(worst));
  const double secs = seconds_since(t0);
  o.require(secs < 10.0, "took " + num(secs) + " s");
  return o;
}

// --- 3: pruning consistency -------------------------------------------------

Outcome criterion3() {
  Outcome o;
  ModelConfig cfg;
  cfg.depth = 2;
  cfg.hs = 16;
  cfg.e = 2;
  const TPModel model = TPModel::create(cfg, 5);
  std::size_t layers_checked = 0;
  double worst_flops = 0.0;
  for (double gamma : {0.25, 0.5, 0.9}) {
    for (std::size_t k = 0; k < model.num_layers(); ++k) {
      for (int r = 1; r <= cfg.e; ++r) {
        const Matrix& w = model.layer(k).shards[static_cast<std::size_t>(r - 1)];
        const std::size_t cols = w.cols();
        const Matrix x = random_matrix(cfg.rows(), cols, 100 + k);
        const Matrix g = random_matrix(cfg.rows(), w.rows(), 200 + k);
        Rng rng = Rng::stream(300 + k, static_cast<std::uint64_t>(r));
        const IndexSet p = random_columns(cols, prune_count(cols, gamma), rng);
        const std::string name = model.layer(k).name;

        LineageTable lin;
        WorkCounter pruned_work, full_work, oracle_work;
        const Matrix y = pruned_local_forward(name, x, w, p, lin, pruned_work);
        const LocalGrads lg = pruned_local_backward(
            name, x, w, g, lin, ImputationPolicy::kZero, nullptr, pruned_work);
        const Matrix y_full = matmul_nt(x, w, full_work);
        matmul_tn(g, x, full_work);
        matmul(g, w, full_work);

        const Matrix xp = prune_columns(x, p);
        const Matrix wp = prune_columns(w, p);
        const Matrix y_oracle = matmul_nt(xp, wp, oracle_work);
        const Matrix gw_oracle = matmul_tn(g, xp, oracle_work);
        const Matrix gi_oracle = matmul(g, wp, oracle_work);

        const std::string where = "gamma " + num(gamma) + " layer " + name +
                                  " rank " + std::to_string(r);
        o.require(y.rows() == y_full.rows() && y.cols() == y_full.cols(),
                  where + ": forward shape");
        o.require(lg.grad_weight.rows() == w.rows() &&
                      lg.grad_weight.cols() == w.cols() &&
                      lg.grad_input.rows() == x.rows() &&
                      lg.grad_input.cols() == x.cols(),
                  where + ": gradient shapes");
        o.require(y == y_oracle, where + ": forward not bit-exact");
        bool zeros = true, survivors = true;
        std::size_t kept = 0;
        for (std::size_t c = 0; c < cols; ++c) {
          const bool gone = p.contains(c + 1);
          for (std::size_t i = 0; i < w.rows(); ++i) {
            const double v = lg.grad_weight(i, c);
            if (gone) zeros = zeros && v == 0.0;
            if (!gone) survivors = survivors && v == gw_oracle(i, kept);
          }
          for (std::size_t i = 0; i < x.rows(); ++i) {
            const double v = lg.grad_input(i, c);
            if (gone) zeros = zeros && v == 0.0;
            if (!gone) survivors = survivors && v == gi_oracle(i, kept);
          }
          if (!gone) ++kept;
        }
        o.require(zeros, where + ": pruned gradient columns not zero");
        o.require(survivors, where + ": surviving columns not bit-exact");
        const double ratio = static_cast<double>(pruned_work.flops) /
                             static_cast<double>(full_work.flops);
        // Column rounding moves the ratio by at most one column's share of
        // the baseline work.
        const double err = std::abs(ratio - (1.0 - gamma));
        worst_flops = std::max(worst_flops, err);
        o.require(err <= 2.0 / static_cast<double>(cfg.hs),
                  where + ": FLOPs ratio " + num(ratio));
        ++layers_checked;
      }
    }
    // The whole model under the same ratio keeps every gradient shape.
    BalanceDecision d(cfg.e);
    d.prune_ratio.assign(static_cast<std::size_t>(cfg.e), gamma);
    ControlOptions co;
    co.selection = PruneSelection::kRandom;
    Rng rng(9);
    const IterationControl ctl = make_iteration_control(model, d, co, nullptr, rng);
    Communicator comm(cfg.e);
    ResizeRuntime rt(cfg.e);
    const ModelGrads pg = compute_gradients(model, random_batch(cfg, 10), comm, ctl, rt);
    for (std::size_t k = 0; k < model.num_layers(); ++k) {
      for (int r = 0; r < cfg.e; ++r) {
        const Matrix& w = model.layer(k).shards[static_cast<std::size_t>(r)];
        const Matrix& gw = pg.layers[k][static_cast<std::size_t>(r)];
        o.require(gw.rows() == w.rows() && gw.cols() == w.cols(),
                  "model gradient shape at gamma " + num(gamma));
      }
    }
  }
  o.note(std::to_string(layers_checked) + " layer shards, worst FLOPs error " +
         num(worst_flops));
  return o;
}

// --- 4: shed-ratio arithmetic ----------------------------------------------

TimingStats stats(double t, double m, double avg, double mn) {
  TimingStats s;
  s.t_own = t;
  s.m_own = m;
  s.t_avg = avg;
  s.t_min = mn;
  return s;
}

Outcome criterion4() {
  Outcome o;
  const double worked = compute_gamma(stats(20, 16, 15, 10), Criterion::kAvg);
  o.require(worked == 0.3125, "worked example gave " + num(worked));
  o.require(compute_gamma(stats(40, 10, 15, 10), Criterion::kAvg) == 0.9,
            "clamp to gamma_max");
  o.require(compute_gamma(stats(15, 10, 15, 10), Criterion::kAvg) == 0.0,
            "no straggling");
  o.require(compute_gamma(stats(10, 8, 15, 10), Criterion::kAvg) == 0.0,
            "fast task");
  o.require(compute_gamma(stats(20, 16, 15, 10), Criterion::kMin) == 0.625,
            "min criterion");
  bool threw = false;
  try {
    compute_gamma(stats(20, 0, 15, 10), Criterion::kAvg);
  } catch (const NoMatmulBaselineError&) {
    threw = true;
  }
  o.require(threw, "zero matmul time must be rejected");
  o.note("worked example " + num(worked));
  return o;
}

// --- 5: migration losslessness ----------------------------------------------

ModelConfig mig_model() {
  ModelConfig cfg;
  cfg.depth = 2;
  cfg.hs = 16;
  cfg.e = 4;
  return cfg;
}

// Every rank in `stragglers` migrates count(width) rows of each layer's
// shard. With `exclusive`, stragglers never help each other.
IterationControl migrate_control(const TPModel& model,
                                 const std::vector<int>& stragglers,
                                 std::function<std::size_t(std::size_t)> count,
                                 CollectionMode collection,
                                 MigrationPrimitive primitive,
                                 bool exclusive = false) {
  IterationControl ctl;
  for (std::size_t k = 0; k < model.num_layers(); ++k) {
    LayerControl lc;
    const std::size_t l = count(model.layer(k).width());
    for (int s : stragglers) {
      if (l == 0) continue;
      std::vector<int> excluded;
      if (exclusive) {
        for (int x : stragglers) {
          if (x != s) excluded.push_back(x);
        }
      }
      MigrationPlan plan = plan_migration(s, l, model.cfg.e, excluded);
      plan.collection = collection;
      plan.primitive = primitive;
      lc.migrations.push_back(plan);
    }
    ctl.layers.push_back(lc);
  }
  return ctl;
}

struct MigRun {
  std::vector<Matrix> weights;
  double rt = 0.0;
};

MigRun run_migrated(const ModelConfig& cfg, const CostParams& cost,
                    const IterationControl& ctl, int iterations) {
  TPModel model = TPModel::create(cfg, 31);
  Communicator comm(cfg.e, cost);
  ResizeRuntime rt(cfg.e);
  for (int it = 0; it < iterations; ++it) {
    train_iteration(model, random_batch(cfg, 500 + it), comm, ctl, rt);
  }
  MigRun out;
  out.weights = model.dense_weights();
  for (const VirtualClock& c : comm.clocks()) out.rt = std::max(out.rt, c.now);
  return out;
}

Outcome criterion5() {
  Outcome o;
  const ModelConfig cfg = mig_model();
  const TPModel shape = TPModel::create(cfg, 31);
  const MigRun base = run_migrated(cfg, {}, {}, 20);
  double worst_base = 0.0, worst_merge = 0.0, worst_prim = 0.0;
  using Count = std::function<std::size_t(std::size_t)>;
  const std::vector<std::pair<std::string, Count>> volumes = {
      {"1", [](std::size_t) { return std::size_t{1}; }},
      {"shard/2", [](std::size_t w) { return w / 2; }},
      {"shard", [](std::size_t w) { return w; }}};
  for (const auto& [label, count] : volumes) {
    const MigRun ex = run_migrated(
        cfg, {}, migrate_control(shape, {2}, count, CollectionMode::kExplicit,
                                 MigrationPrimitive::kBroadcastReduce), 20);
    const MigRun mg = run_migrated(
        cfg, {}, migrate_control(shape, {2}, count, CollectionMode::kMerged,
                                 MigrationPrimitive::kBroadcastReduce), 20);
    const MigRun sg = run_migrated(
        cfg, {}, migrate_control(shape, {2}, count, CollectionMode::kMerged,
                                 MigrationPrimitive::kScatterGather), 20);
    const double db = max_over(mg.weights, base.weights);
    const double dm = max_over(ex.weights, mg.weights);
    const double dp = max_over(sg.weights, mg.weights);
    worst_base = std::max(worst_base, db);
    worst_merge = std::max(worst_merge, dm);
    worst_prim = std::max(worst_prim, dp);
    o.require(db <= 1e-8, "L_mig " + label + " vs baseline " + num(db));
    o.require(dm <= 1e-12, "L_mig " + label + " explicit vs merged " + num(dm));
    o.require(dp <= 1e-12, "L_mig " + label + " primitives differ by " + num(dp));
  }
  o.note("weights vs baseline " + num(worst_base) + ", explicit vs merged " +
         num(worst_merge) + ", primitives " + num(worst_prim));

  // Time table in a homogeneous group of eight: nu ranks each migrate
  // gamma of every shard to the remaining ranks.
  const CostParams cost = trend_cost();
  ModelConfig big = cfg;
  big.hs = 64;
  big.e = 8;
  const TPModel big_shape = TPModel::create(big, 31);
  std::vector<double> gap(5, 0.0);
  std::string table;
  for (int nu = 1; nu <= 4; ++nu) {
    std::vector<int> slow;
    for (int r = 1; r <= nu; ++r) slow.push_back(r);
    table += " nu=" + std::to_string(nu) + ":";
    for (double gamma : {0.25, 0.5, 0.75, 1.0}) {
      const Count count = [gamma](std::size_t w) {
        return migrate_count(w, gamma);
      };
      const double br =
          run_migrated(big, cost,
                       migrate_control(big_shape, slow, count,
                                       CollectionMode::kMerged,
                                       MigrationPrimitive::kBroadcastReduce,
                                       true),
                       3)
              .rt;
      const double sg =
          run_migrated(big, cost,
                       migrate_control(big_shape, slow, count,
                                       CollectionMode::kMerged,
                                       MigrationPrimitive::kScatterGather,
                                       true),
                       3)
              .rt;
      o.require(br <= sg, "nu " + std::to_string(nu) + " gamma " + num(gamma) +
                               ": broadcast-reduce " + num(br) +
                               " above scatter-gather " + num(sg));
      table += " " + num(sg / br);
      if (nu == 1 || nu == 4) {
        const double ratio = sg / br;
        if (nu == 1) gap[static_cast<std::size_t>(gamma * 4)] = ratio;
        if (nu == 4) {
          o.require(ratio < gap[static_cast<std::size_t>(gamma * 4)],
                    "gap at nu=4 not below nu=1 for gamma " + num(gamma));
        }
      }
    }
  }
  o.note("scatter-gather/broadcast-reduce time ratio" + table);
  return o;
}

// --- 6: group boundary scan -----------------------------------------------

Outcome criterion6() {
  Outcome o;
  Rng rng(606);
  int mismatches = 0, positive = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const testing::BoundaryInstance in = testing::random_boundary_instance(rng);
    const std::size_t want =
        testing::brute_force_boundary(in.sorted, in.z, in.t_min, in.cm.phi1, in.e);
    const std::size_t got =
        group_boundary_scan(in.sorted, in.z, in.t_min, in.cm, in.e);
    if (got != want) ++mismatches;
    if (want > 0) ++positive;
  }
  o.require(mismatches == 0, std::to_string(mismatches) + " mismatches");
  CostModel cm;
  cm.phi1 = PiecewiseLinear::linear(0.1);
  const std::vector<RankLoad> hand = {{1, 40, 100, 0.1}, {2, 30, 100, 0.1},
                                      {3, 10, 100, 0.1}, {4, 10, 100, 0.1}};
  const std::size_t x = group_boundary_scan(hand, 2, 10.0, cm, 4);
  o.require(x == 1, "hand example gave x=" + std::to_string(x));
  o.note("100 instances, " + std::to_string(positive) +
         " with migration; hand example x=" + std::to_string(x));
  return o;
}

// --- 7: split solver ----------------------------------------------------------

Outcome criterion7() {
  Outcome o;
  Rng rng(707);
  int bad = 0, interior = 0;
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const testing::BetaInstance in = testing::random_beta_instance(rng);
    const double beta = solve_beta(in.l_gamma, in.cm, in.e);
    const testing::BetaCheck c = testing::check_beta(in, beta);
    if (!c.ok) ++bad;
    if (beta > 0.0 && beta < 1.0) {
      ++interior;
      worst = std::max(worst, std::abs(c.residual) / c.scale);
    }
  }
  o.require(bad == 0, std::to_string(bad) + " instances off the bound");
  CostModel lin;
  lin.omega2 = PiecewiseLinear::linear(1.0);
  lin.phi1 = PiecewiseLinear::linear(1.0);
  lin.phi2 = PiecewiseLinear::linear(1.0);
  const double beta = solve_beta(100.0, lin, 2);
  o.require(std::abs(beta - 1.0 / 3.0) <= 1e-9, "linear example " + num(beta));
  o.note(std::to_string(interior) + " interior roots, worst scaled residual " +
         num(worst) + "; linear example " + num(beta));
  return o;
}

// --- 8: efficiency trend ------------------------------------------------------

ExperimentConfig trend_config(Mode mode, const std::string& chi) {
  ExperimentConfig c;
  c.model.e = 4;
  c.model.depth = 4;
  c.model.hs = 64;
  c.model.bs = 4;
  c.model.sql = 2;
  c.mode = mode;
  c.epochs = 4;
  c.iterations_per_epoch = 120;
  c.seed = 8;
  c.cost = trend_cost();
  c.chi_spec = chi;
  c.validate();
  return c;
}

Outcome criterion8() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  const RunResult homo = run_experiment(trend_config(Mode::kBaseline, "none"));
  const double rt0 = homo.mean_rt();
  const double m = homo.matmul_share;
  double last_ratio = 0.0;
  double zero_at8 = 0.0;
  std::string trend;
  for (double chi : {2.0, 4.0, 8.0}) {
    const std::string spec = "rr:" + num(chi);
    const double base = run_experiment(trend_config(Mode::kBaseline, spec)).mean_rt();
    const double zero = run_experiment(trend_config(Mode::kZeroPri, spec)).mean_rt();
    const double ratio = base / rt0;
    const double predicted = 1.0 + (chi - 1.0) * m;
    o.require(ratio >= 0.8 * predicted, "baseline ratio " + num(ratio) +
                                            " below 0.8 x " + num(predicted) +
                                            " at chi " + num(chi));
    o.require(ratio > last_ratio, "baseline ratio not increasing at chi " + num(chi));
    o.require(zero <= 1.15 * rt0, "zero-pri " + num(zero / rt0 - 1.0) +
                                      " above homogeneous at chi " + num(chi));
    last_ratio = ratio;
    if (chi == 8.0) zero_at8 = zero;
    trend += " chi=" + num(chi) + " baseline x" + num(ratio) + " (model x" +
             num(predicted) + "), zero-pri +" + num(100.0 * (zero / rt0 - 1.0)) + "%";
  }
  const double semi = run_experiment(trend_config(Mode::kSemi, "rr:8")).mean_rt();
  const double mig = run_experiment(trend_config(Mode::kMig, "rr:8")).mean_rt();
  o.require(semi <= zero_at8, "semi " + num(semi) + " above zero-pri " + num(zero_at8));
  o.require(semi <= mig, "semi " + num(semi) + " above mig " + num(mig));
  const double secs = seconds_since(t0);
  o.require(secs < 120.0, "took " + num(secs) + " s");
  o.note("matmul share " + num(m) + ";" + trend + "; chi=8 semi " + num(semi) +
         " zero-pri " + num(zero_at8) + " mig " + num(mig) + "; " + num(secs) + " s");
  return o;
}

// --- 9: priority list churn ---------------------------------------------------

ExperimentConfig churn_config(bool incremental) {
  ExperimentConfig c;
  c.model.e = 2;
  c.model.depth = 2;
  c.model.hs = 16;
  c.mode = Mode::kZeroPri;
  c.epochs = 10;
  c.iterations_per_epoch = 20;
  c.seed = 9;
  c.cost = trend_cost();
  c.chi_spec = "fixed:4";
  c.priority.incremental = incremental;
  c.validate();
  return c;
}

// The straggler's lists over all layers, one string per epoch.
std::vector<std::string> straggler_lists(const RunResult& r) {
  std::vector<std::string> out;
  for (const auto& epoch : r.pri_lists) {
    std::string s;
    for (const IndexSet& l : epoch.front()) {
      for (std::size_t i : l.indices()) s += std::to_string(i) + ",";
      s += "|";
    }
    out.push_back(s);
  }
  return out;
}

Outcome criterion9() {
  Outcome o;
  const std::vector<std::string> inc =
      straggler_lists(run_experiment(churn_config(true)));
  const std::vector<std::string> full =
      straggler_lists(run_experiment(churn_config(false)));
  const std::size_t distinct = std::set<std::string>(inc.begin(), inc.end()).size();
  o.require(inc.size() == 10 && full.size() == 10, "expected 10 epochs of lists");
  o.require(distinct >= 3, "incremental lists took only " +
                               std::to_string(distinct) + " values");
  std::size_t fixed_from = full.size();
  while (fixed_from > 1 && full[fixed_from - 2] == full.back()) --fixed_from;
  o.require(fixed_from <= 3, "full update settles only at epoch " +
                                 std::to_string(fixed_from));
  o.note("incremental: " + std::to_string(distinct) +
         " distinct lists over 10 epochs; full update fixed from epoch " +
         std::to_string(fixed_from));
  return o;
}

// --- 10: lambda sweep -----------------------------------------------------------

ExperimentConfig sweep_config(Mode mode) {
  ExperimentConfig c;
  c.model.e = 8;
  c.model.depth = 2;
  c.model.hs = 64;
  c.mode = mode;
  c.epochs = 3;
  c.iterations_per_epoch = 40;
  c.seed = 10;
  c.cost = trend_cost();
  c.chi_spec = "fixed:8,6,4,2";
  c.criterion = Criterion::kMin;
  c.validate();
  return c;
}

double run_gap(const RunResult& a, const RunResult& b) {
  double d = max_over(a.final_weights, b.final_weights);
  for (std::size_t i = 0; i < a.epoch_rt.size(); ++i) {
    d = std::max(d, std::abs(a.epoch_rt[i] - b.epoch_rt[i]));
  }
  return d;
}

Outcome criterion10() {
  Outcome o;
  std::vector<double> rts;
  std::vector<RunResult> sweep;
  for (std::size_t lambda = 0; lambda <= 4; ++lambda) {
    ExperimentConfig c = sweep_config(Mode::kSemi);
    c.lambda = lambda;
    sweep.push_back(run_experiment(c));
    rts.push_back(sweep.back().mean_rt());
  }
  const RunResult pridiff = run_experiment(sweep_config(Mode::kZeroPriDiffR));
  const RunResult mig = run_experiment(sweep_config(Mode::kMig));
  const double d0 = run_gap(sweep.front(), pridiff);
  const double d4 = run_gap(sweep.back(), mig);
  o.require(d0 <= 1e-9, "lambda=0 vs zero-pridiff-r " + num(d0));
  o.require(d4 <= 1e-9, "lambda=4 vs mig " + num(d4));
  const RunResult autorun = run_experiment(sweep_config(Mode::kSemi));
  const std::size_t best =
      static_cast<std::size_t>(std::min_element(rts.begin(), rts.end()) - rts.begin());
  const double ratio = autorun.mean_rt() / rts[best];
  o.require(ratio <= 1.10, "automatic lambda RT " + num(ratio) + "x the best");
  std::string line;
  for (std::size_t l = 0; l < rts.size(); ++l) {
    line += " " + std::to_string(l) + ":" + num(rts[l]);
  }
  std::string chosen;
  for (std::size_t v : autorun.epoch_lambda) chosen += std::to_string(v) + " ";
  o.note("RT by lambda" + line + "; automatic " + num(autorun.mean_rt()) +
         " with lambda " + chosen + "per epoch; gaps " + num(d0) + ", " + num(d4));
  return o;
}

// --- 11: determinism ----------------------------------------------------------

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome criterion11() {
  Outcome o;
  const std::filesystem::path dir =
      std::filesystem::temp_directory_path() / "tpflex_acceptance";
  int compared = 0;
  for (Mode mode : {Mode::kBaseline, Mode::kZeroRd, Mode::kZeroPri,
                    Mode::kZeroPriDiffE, Mode::kZeroPriDiffR, Mode::kMig,
                    Mode::kSemi}) {
    ExperimentConfig c;
    c.model.e = 4;
    c.model.depth = 2;
    c.model.hs = 16;
    c.mode = mode;
    c.epochs = 3;
    c.iterations_per_epoch = 10;
    c.seed = 11;
    c.cost = trend_cost();
    c.chi_spec = "rr:5";
    if (mode == Mode::kZeroPriDiffE) c.fixed_gamma = 0.5;
    c.validate();
    std::string first;
    for (int pass = 0; pass < 2; ++pass) {
      const RunResult r = run_experiment(c);
      const std::filesystem::path out = dir / (to_string(mode) + std::to_string(pass));
      emit_metrics(c, r, audit_run(c, r), out.string());
      const std::string csv = slurp(out / "metrics.csv");
      if (pass == 0) {
        first = csv;
      } else {
        o.require(!csv.empty() && csv == first, to_string(mode) + " CSV differs");
        o.require(slurp(dir / (to_string(mode) + "0") / "summary.json") ==
                      slurp(out / "summary.json"),
                  to_string(mode) + " summary differs");
        ++compared;
      }
    }
  }
  std::filesystem::remove_all(dir);
  o.note(std::to_string(compared) + " modes rerun byte-identical");
  return o;
}

// --- 12: imputation ordering (informational) ---------------------------------

Outcome criterion12() {
  Outcome o;
  auto config = [](Mode mode, ImputationPolicy policy) {
    ExperimentConfig c;
    c.model.e = 2;
    c.model.depth = 2;
    c.model.hs = 16;
    c.model.classes = 8;
    c.mode = mode;
    c.epochs = 20;
    c.iterations_per_epoch = 10;
    c.seed = 12;
    c.imputation = policy;
    c.data_noise = 1.5;
    c.chi_spec = "fixed:4";
    if (mode == Mode::kZeroPriDiffE) c.fixed_gamma = 0.5;
    c.validate();
    return c;
  };
  const RunResult base = run_experiment(config(Mode::kBaseline, ImputationPolicy::kZero));
  auto delta = [&](ImputationPolicy p) {
    const RunResult r = run_experiment(config(Mode::kZeroPriDiffE, p));
    double d = 0.0;
    for (std::size_t i = 0; i < r.epoch_acc.size(); ++i) {
      d += r.epoch_acc[i] - base.epoch_acc[i];
    }
    return d / static_cast<double>(r.epoch_acc.size());
  };
  const double same = delta(ImputationPolicy::kSame);
  const double zero = delta(ImputationPolicy::kZero);
  const double average = delta(ImputationPolicy::kAverage);
  const bool ordered = same >= zero && zero >= average;
  o.note("mean ACC delta vs baseline: same " + num(same) + ", zero " + num(zero) +
         ", average " + num(average) + "; ordering same >= zero >= average " +
         (ordered ? "holds" : "does not hold"));
  return o;
}

}  // namespace
}  // namespace tpflex

int main() {
  using namespace tpflex;
  const std::vector<std::function<Outcome()>> criteria = {
      criterion1, criterion2, criterion3, criterion4,  criterion5,  criterion6,
      criterion7, criterion8, criterion9, criterion10, criterion11, criterion12};
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int n = static_cast<int>(i) + 1;
    Outcome o;
    try {
      o = criteria[i]();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("threw: ") + e.what();
    }
    const bool informational = n == 12;
    const char* verdict = informational ? "INFO" : (o.pass ? "PASS" : "FAIL");
    std::printf("criterion %d %s: %s\n", n, verdict, o.detail.c_str());
    std::fflush(stdout);
    if (!informational && !o.pass) ++failed;
  }
  std::printf("%d of 11 gating criteria passed\n", 11 - failed);
  return failed == 0 ? 0 : 1;
}
