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

#include "tpflex/experiment.h"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "tpflex/balance.h"
#include "tpflex/error.h"
#include "tpflex/log.h"
#include "tpflex/rng.h"

namespace tpflex {
namespace {

constexpr std::size_t kLatent = 8;
constexpr const char* kCsvHeader =
    "epoch,mode,rank,rt,compute_t,comm_t,flops,gamma,beta,lambda,loss,acc";

std::size_t idx(int rank) { return static_cast<std::size_t>(rank - 1); }

double mean(const std::vector<double>& v) {
  return v.empty() ? 0.0
                   : std::accumulate(v.begin(), v.end(), 0.0) /
                         static_cast<double>(v.size());
}

// Work-shedding controller shared by every balancing mode. At every group
// refresh the ranks exchange the compute time their unbalanced workload
// would take; a straggler then sheds the matmul fraction that brings it
// down to the criterion, and every other rank returns to its full workload.
class Balancer {
 public:
  Balancer(const ExperimentConfig& cfg, std::optional<CostModel> cm)
      : cfg_(cfg),
        e_(cfg.model.e),
        cm_(std::move(cm)),
        stats_(static_cast<std::size_t>(e_)),
        keep_(static_cast<std::size_t>(e_), 1.0),
        share_(static_cast<std::size_t>(e_), 0.0),
        fixed_(static_cast<std::size_t>(e_), 0.0),
        may_help_(static_cast<std::size_t>(e_), true) {}

  BalanceDecision decision() const {
    BalanceDecision d(e_);
    for (std::size_t i = 0; i < keep_.size(); ++i) {
      d.may_help[i] = may_help_[i];
      if (fixed_[i] > 0.0) {
        d.prune_ratio[i] = fixed_[i];
        continue;
      }
      const double shed = 1.0 - keep_[i];
      const double b = share_[i];
      if (shed <= 0.0) continue;
      if (b <= 0.0) {
        d.prune_ratio[i] = shed;
      } else if (b >= 1.0) {
        d.migrate_ratio[i] = shed;
      } else {
        // (1 - b*s)(1 - (1-b)*s) = keep
        const double q = b * (1.0 - b);
        const double s = (1.0 - std::sqrt(1.0 - 4.0 * q * shed)) / (2.0 * q);
        d.migrate_ratio[i] = b * s;
        d.prune_ratio[i] =
            std::min((1.0 - b) * s, cfg_.priority.gamma_max);
      }
    }
    return d;
  }

  double shed(int r) const {
    const auto i = idx(r);
    return fixed_[i] > 0.0 ? fixed_[i] : 1.0 - keep_[i];
  }
  double share(int r) const { return share_[idx(r)]; }
  std::size_t lambda() const { return lambda_; }

  bool observe(const IterationReport& rep, Communicator& comm, int epoch,
               int iteration, RunResult& out) {
    for (int r = 1; r <= e_; ++r) {
      stats_[idx(r)].t_own = rep.t_own[idx(r)];
      stats_[idx(r)].m_own = rep.m_own[idx(r)];
    }
    if (!maybe_refresh_group_stats(stats_, comm, cfg_.refresh_threshold)) {
      return false;
    }
    ++out.refreshes;
    const std::vector<double> t = comm.all_gather_scalar(rep.t_nat);
    const std::vector<double> m = comm.all_gather_scalar(rep.m_nat);
    std::string msg = "natural compute times:";
    for (double v : t) msg += " " + std::to_string(v);
    log_debug(msg);
    const double avg = mean(t);
    const double mn = *std::min_element(t.begin(), t.end());
    std::vector<TimingStats> nat(static_cast<std::size_t>(e_));
    for (std::size_t i = 0; i < nat.size(); ++i) {
      nat[i].t_own = t[i];
      nat[i].m_own = m[i];
      nat[i].t_avg = avg;
      nat[i].t_min = mn;
    }
    if (cfg_.mode == Mode::kSemi) {
      replan(nat, epoch, iteration, out);
    } else {
      rebalance(nat);
    }
    return true;
  }

 private:
  void rebalance(const std::vector<TimingStats>& nat) {
    const Criterion crit = cfg_.criterion;
    const double ref = crit == Criterion::kAvg ? nat[0].t_avg : nat[0].t_min;
    const bool mig = cfg_.mode == Mode::kMig;
    const auto ue = static_cast<std::size_t>(e_);
    std::vector<bool> slow(ue);
    std::vector<Criterion> crits(ue, crit);
    std::vector<double> lo(ue, mig ? 0.0 : 1.0 - cfg_.priority.gamma_max);
    for (std::size_t i = 0; i < ue; ++i) {
      slow[i] = nat[i].t_own > ref * (1.0 + cfg_.epsilon);
      may_help_[i] = !(mig && slow[i]);
      share_[i] = mig && slow[i] ? 1.0 : 0.0;
      fixed_[i] = slow[i] && cfg_.fixed_gamma ? *cfg_.fixed_gamma : 0.0;
    }
    settle(nat, slow, crits, lo);
    lambda_ = 0;
    for (std::size_t i = 0; i < ue; ++i) {
      if (mig && keep_[i] < 1.0) ++lambda_;
    }
  }

  void replan(const std::vector<TimingStats>& nat, int epoch, int iteration,
              RunResult& out) {
    PlanInput in;
    in.stats = nat;
    const double width = static_cast<double>(cfg_.model.hs);
    for (const TimingStats& s : nat) {
      in.detect_times.push_back(s.t_own);
      in.width.push_back(width);
      in.speed.push_back(s.t_own / width);
    }
    in.epsilon = cfg_.epsilon;
    in.gamma_max = cfg_.priority.gamma_max;
    in.forced_lambda = cfg_.lambda;
    const HybridPlan plan = build_plan(in, *cm_, e_);

    const auto ue = static_cast<std::size_t>(e_);
    std::vector<bool> slow(ue, false);
    std::vector<double> lo(ue, 1.0);
    for (int r : plan.stragglers) slow[idx(r)] = true;
    for (std::size_t i = 0; i < ue; ++i) {
      share_[i] = slow[i] ? plan.migrate_share[i] : 0.0;
      lo[i] = share_[i] >= 1.0 ? 0.0 : 1.0 - cfg_.priority.gamma_max;
      may_help_[i] = true;
    }
    if (plan.mode == PlanMode::kMulti) {
      for (int r : plan.migration_group) may_help_[idx(r)] = false;
    }
    settle(nat, slow, plan.criterion, lo);
    lambda_ = plan.lambda();
    out.plans.push_back({epoch, iteration, plan.z, plan.lambda(), plan.beta,
                         plan.migration_group, plan.resize_group});
    log_debug("epoch " + std::to_string(epoch) + " iteration " +
              std::to_string(iteration) + ": z=" + std::to_string(plan.z) +
              " lambda=" + std::to_string(plan.lambda()) +
              " beta=" + std::to_string(plan.beta));
  }

  // Repeats the gamma update on projected compute times until the group
  // settles. Against the average this converges to the fixed point that
  // successive refreshes would reach; against the minimum one round is
  // already final.
  void settle(const std::vector<TimingStats>& nat,
              const std::vector<bool>& slow,
              const std::vector<Criterion>& crit,
              const std::vector<double>& lo) {
    const std::size_t n = nat.size();
    std::fill(keep_.begin(), keep_.end(), 1.0);
    std::vector<double> proj(n);
    for (int round = 0; round < 200; ++round) {
      for (std::size_t i = 0; i < n; ++i) {
        proj[i] = nat[i].t_own - nat[i].m_own * (1.0 - keep_[i]);
      }
      TimingStats s;
      s.t_avg = mean(proj);
      s.t_min = *std::min_element(proj.begin(), proj.end());
      double moved = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (!slow[i]) continue;
        s.t_own = proj[i];
        s.m_own = nat[i].m_own;
        const double next =
            std::clamp(keep_[i] - raw_gamma(s, crit[i]), lo[i], 1.0);
        moved = std::max(moved, std::abs(next - keep_[i]));
        keep_[i] = next;
      }
      if (moved < 1e-12) break;
    }
  }

  const ExperimentConfig& cfg_;
  int e_;
  std::optional<CostModel> cm_;
  std::vector<TimingStats> stats_;
  std::vector<double> keep_;
  std::vector<double> share_;
  std::vector<double> fixed_;
  std::vector<bool> may_help_;
  std::size_t lambda_ = 0;
};

PruneSelection selection_for(Mode mode) {
  switch (mode) {
    case Mode::kZeroRd: return PruneSelection::kRandom;
    case Mode::kZeroPri: return PruneSelection::kPriority;
    default: return PruneSelection::kPriorityDifferentiated;
  }
}

bool uses_priority(Mode mode) {
  return mode == Mode::kZeroPri || mode == Mode::kZeroPriDiffE ||
         mode == Mode::kZeroPriDiffR || mode == Mode::kSemi;
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

Batch Dataset::batch(std::size_t i, std::size_t rows) const {
  Batch b;
  b.x = Matrix(rows, x.cols());
  b.labels.resize(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t src = (i * rows + r) % size();
    for (std::size_t c = 0; c < x.cols(); ++c) b.x(r, c) = x(src, c);
    b.labels[r] = labels[src];
  }
  return b;
}

Dataset make_dataset(std::size_t n, std::size_t hs, std::size_t classes,
                     double noise, std::uint64_t seed, std::uint64_t split) {
  const std::size_t latent = std::min(kLatent, hs);
  Rng shared = Rng::stream(seed, 0xda7a);
  Matrix centers(classes, latent);
  for (double& v : centers.data()) v = 2.0 * shared.normal();
  Matrix proj(latent, hs);
  const double scale = 1.0 / std::sqrt(static_cast<double>(latent));
  for (double& v : proj.data()) v = scale * shared.normal();

  Rng rng = Rng::stream(seed, 0xda7a + 1 + split);
  Dataset d;
  d.x = Matrix(n, hs);
  d.labels.resize(n);
  std::vector<double> z(latent);
  for (std::size_t i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(rng.below(classes));
    d.labels[i] = static_cast<int>(k) + 1;
    for (std::size_t a = 0; a < latent; ++a) {
      z[a] = centers(k, a) + noise * rng.normal();
    }
    for (std::size_t c = 0; c < hs; ++c) {
      double s = 0.0;
      for (std::size_t a = 0; a < latent; ++a) s += z[a] * proj(a, c);
      d.x(i, c) = s;
    }
  }
  return d;
}

double RunResult::total_rt() const {
  return std::accumulate(epoch_rt.begin(), epoch_rt.end(), 0.0);
}

double RunResult::mean_rt() const { return mean(epoch_rt); }

RunResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const int e = cfg.model.e;
  const HeterogeneityProfile profile = cfg.profile();
  TPModel model = TPModel::create(cfg.model, cfg.seed);
  const Dataset train = make_dataset(cfg.train_size, cfg.model.hs,
                                     cfg.model.classes, cfg.data_noise,
                                     cfg.seed, 0);
  const Dataset eval = make_dataset(cfg.eval_size, cfg.model.hs,
                                    cfg.model.classes, cfg.data_noise,
                                    cfg.seed, 1);
  RunResult out;
  if (cfg.mode == Mode::kSemi) {
    PretestOptions po;
    po.sample_gammas = cfg.sample_gammas;
    po.collection = cfg.collection;
    po.primitive = cfg.primitive;
    po.seed = cfg.seed;
    out.cost_model = pretest_costs(cfg.model, cfg.cost, po);
  }

  Communicator comm(e, cfg.cost);
  ResizeRuntime rt(e);
  rt.keep_history = cfg.imputation == ImputationPolicy::kSame;
  std::optional<Balancer> balancer;
  if (cfg.mode != Mode::kBaseline) balancer.emplace(cfg, out.cost_model);
  std::vector<PriorityState> priority;
  std::vector<std::vector<Matrix>> snapshot;
  if (uses_priority(cfg.mode)) {
    priority = make_priority_states(model);
    for (int r = 1; r <= e; ++r) snapshot.push_back(local_weights(model, r));
  }
  ControlOptions co;
  co.selection = selection_for(cfg.mode);
  co.imputation = cfg.imputation;
  co.collection = cfg.collection;
  co.primitive = cfg.primitive;
  co.prune_cost = {cfg.cost.prune_alloc, cfg.cost.prune_col_cost};
  co.priority = cfg.priority;
  co.priority.iterations_per_epoch = cfg.iterations_per_epoch;
  Rng select_rng = Rng::stream(cfg.seed, 0x5e1ec7);

  const std::size_t rows = cfg.model.rows();
  std::size_t batch_index = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (int r = 1; r <= e; ++r) comm.set_slowdown(r, profile.chi(epoch, r));
    const std::vector<VirtualClock> start = comm.clocks();
    std::vector<double> losses;
    std::vector<double> flops(static_cast<std::size_t>(e), 0.0);
    for (int it = 1; it <= cfg.iterations_per_epoch; ++it) {
      const Batch batch = train.batch(batch_index++, rows);
      const BalanceDecision decision =
          balancer ? balancer->decision() : BalanceDecision(e);
      IterationControl ctl = make_iteration_control(
          model, decision, co, priority.empty() ? nullptr : &priority,
          select_rng);
      IterationReport rep;
      try {
        rep = train_iteration(model, batch, comm, ctl, rt);
      } catch (const Error& err) {
        throw Error("epoch " + std::to_string(epoch) + " iteration " +
                    std::to_string(it) + ": " + err.what());
      }
      if (!priority.empty() && !ctl.layers.empty()) {
        for (int r = 1; r <= e; ++r) {
          for (std::size_t k = 0; k < model.num_layers(); ++k) {
            priority[idx(r)].note_pruned(k, ctl.layers[k].prune_for(r));
          }
        }
      }
      losses.push_back(rep.loss);
      for (int r = 1; r <= e; ++r) flops[idx(r)] += rep.flops[idx(r)];
      out.audit += rep.audit;
      out.all_reduces += rep.all_reduces;
      ++out.iterations;
      if (balancer) balancer->observe(rep, comm, epoch, it, out);
    }

    if (!priority.empty()) {
      std::vector<std::vector<IndexSet>> lists;
      for (int r = 1; r <= e; ++r) {
        const auto w_new = local_weights(model, r);
        const double gu = balancer ? balancer->shed(r) : 0.0;
        auto [next, plan] = epoch_priority_update(
            priority[idx(r)], w_new, snapshot[idx(r)], gu, co.priority,
            co.selection == PruneSelection::kPriorityDifferentiated);
        priority[idx(r)] = std::move(next);
        snapshot[idx(r)] = w_new;
        lists.push_back(std::move(plan.prune));
      }
      out.pri_lists.push_back(std::move(lists));
    }

    double epoch_rt = 0.0;
    for (int r = 1; r <= e; ++r) {
      epoch_rt = std::max(epoch_rt, comm.clock(r).now - start[idx(r)].now);
    }
    const double acc = evaluate_accuracy(model, eval.all());
    const double loss = mean(losses);
    const std::size_t lambda = balancer ? balancer->lambda() : 0;
    out.epoch_rt.push_back(epoch_rt);
    out.epoch_loss.push_back(loss);
    out.epoch_acc.push_back(acc);
    out.epoch_lambda.push_back(lambda);
    for (int r = 1; r <= e; ++r) {
      const VirtualClock& a = start[idx(r)];
      const VirtualClock& b = comm.clock(r);
      EpochRecord rec;
      rec.epoch = epoch;
      rec.mode = to_string(cfg.mode);
      rec.rank = r;
      rec.rt = epoch_rt;
      rec.compute_t = (b.matmul - a.matmul) + (b.matmul_help - a.matmul_help) +
                      (b.elementwise - a.elementwise) +
                      (b.overhead - a.overhead);
      rec.comm_t = b.comm - a.comm;
      rec.flops = flops[idx(r)];
      rec.gamma = balancer ? balancer->shed(r) : 0.0;
      rec.beta = balancer ? balancer->share(r) : 0.0;
      rec.lambda = lambda;
      rec.loss = loss;
      rec.acc = acc;
      out.records.push_back(rec);
    }
    log_info("epoch " + std::to_string(epoch) + " mode " +
             to_string(cfg.mode) + " rt " + fmt_double(epoch_rt) + " loss " +
             fmt_double(loss) + " acc " + fmt_double(acc));
  }
  out.comm = comm.counts();
  out.final_weights = model.dense_weights();
  out.clocks = comm.clocks();
  const VirtualClock& c1 = comm.clock(1);
  out.matmul_share = c1.busy > 0.0 ? c1.matmul / c1.busy : 0.0;
  return out;
}

std::vector<AuditCheck> audit_run(const ExperimentConfig& cfg,
                                  const RunResult& run) {
  std::vector<AuditCheck> checks;
  auto add = [&](std::string name, bool pass, std::string detail) {
    checks.push_back({std::move(name), pass, std::move(detail)});
  };
  const std::uint64_t expect =
      2ULL * static_cast<std::uint64_t>(cfg.model.depth) * run.iterations;
  add("all_reduce_count", run.all_reduces == expect,
      std::to_string(run.all_reduces) + " model all-reduces, expected " +
          std::to_string(expect));
  const LayerAudit& a = run.audit;
  if (cfg.mode == Mode::kBaseline) {
    add("baseline_no_balancing",
        a.pruned_matmuls == 0 && a.migrated_matmuls == 0 &&
            a.imputations == 0,
        std::to_string(a.pruned_matmuls) + " pruned, " +
            std::to_string(a.migrated_matmuls) + " migrated matmuls");
  }
  if (cfg.mode == Mode::kMig) {
    add("mig_no_imputation", a.imputations == 0 && a.pruned_matmuls == 0,
        std::to_string(a.imputations) + " imputations");
  }
  if (is_zero_mode(cfg.mode)) {
    add("zero_no_migration", a.migrated_matmuls == 0,
        std::to_string(a.migrated_matmuls) + " migrated matmuls");
  }
  if (cfg.mode == Mode::kSemi) {
    bool ok = true;
    std::size_t p = 0;
    std::size_t lambda = 0;
    for (std::size_t ep = 0; ep < run.epoch_lambda.size(); ++ep) {
      while (p < run.plans.size() &&
             run.plans[p].epoch <= static_cast<int>(ep) + 1) {
        lambda = run.plans[p].lambda;
        ++p;
      }
      ok = ok && run.epoch_lambda[ep] == lambda;
    }
    add("semi_lambda_matches_plan", ok,
        std::to_string(run.plans.size()) + " plans logged");
  }
  const std::size_t rows = run.epoch_rt.size() *
                           static_cast<std::size_t>(cfg.model.e);
  add("record_count", run.records.size() == rows,
      std::to_string(run.records.size()) + " records");
  return checks;
}

std::string metrics_csv(const std::vector<EpochRecord>& records) {
  std::string out = kCsvHeader;
  out += '\n';
  for (const EpochRecord& r : records) {
    out += std::to_string(r.epoch) + ',' + r.mode + ',' +
           std::to_string(r.rank) + ',' + fmt_double(r.rt) + ',' +
           fmt_double(r.compute_t) + ',' + fmt_double(r.comm_t) + ',' +
           fmt_double(r.flops) + ',' + fmt_double(r.gamma) + ',' +
           fmt_double(r.beta) + ',' + std::to_string(r.lambda) + ',' +
           fmt_double(r.loss) + ',' + fmt_double(r.acc) + '\n';
  }
  return out;
}

void write_metrics_csv(const std::vector<EpochRecord>& records,
                       const std::string& path) {
  if (records.empty()) {
    throw InputError("no metric records to write");
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  f << metrics_csv(records);
  if (!f) throw IoError("failed writing '" + path + "'");
}

std::vector<EpochRecord> read_metrics_csv(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(f, line) || line != kCsvHeader) {
    throw IoError("'" + path + "' does not start with the metrics header");
  }
  std::vector<EpochRecord> out;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
    if (cells.size() != 12) {
      throw IoError("malformed metrics row '" + line + "'");
    }
    EpochRecord r;
    r.epoch = std::stoi(cells[0]);
    r.mode = cells[1];
    r.rank = std::stoi(cells[2]);
    r.rt = std::stod(cells[3]);
    r.compute_t = std::stod(cells[4]);
    r.comm_t = std::stod(cells[5]);
    r.flops = std::stod(cells[6]);
    r.gamma = std::stod(cells[7]);
    r.beta = std::stod(cells[8]);
    r.lambda = static_cast<std::size_t>(std::stoull(cells[9]));
    r.loss = std::stod(cells[10]);
    r.acc = std::stod(cells[11]);
    out.push_back(std::move(r));
  }
  return out;
}

nlohmann::json to_json(const CostModel& cm) {
  auto pts = [](const PiecewiseLinear& f) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& [x, y] : f.points()) a.push_back({x, y});
    return a;
  };
  return {{"omega1", cm.omega1},
          {"omega2", pts(cm.omega2)},
          {"phi1", pts(cm.phi1)},
          {"phi2", pts(cm.phi2)}};
}

nlohmann::json run_summary(const ExperimentConfig& cfg, const RunResult& run,
                           const std::vector<AuditCheck>& audit) {
  nlohmann::json j;
  j["config"] = to_json(cfg);
  j["totals"] = {{"epochs", run.epoch_rt.size()},
                 {"iterations", run.iterations},
                 {"total_rt", run.total_rt()},
                 {"mean_rt", run.mean_rt()},
                 {"final_loss", run.epoch_loss.empty()
                                    ? 0.0
                                    : run.epoch_loss.back()},
                 {"final_acc",
                  run.epoch_acc.empty() ? 0.0 : run.epoch_acc.back()},
                 {"refreshes", run.refreshes},
                 {"model_all_reduces", run.all_reduces},
                 {"migration_messages", run.comm.total(CommTag::kMigration)},
                 {"stats_messages", run.comm.total(CommTag::kStats)},
                 {"pruned_matmuls", run.audit.pruned_matmuls},
                 {"imputations", run.audit.imputations},
                 {"migrated_matmuls", run.audit.migrated_matmuls},
                 {"explicit_reduces", run.audit.explicit_reduces},
                 {"merged_collections", run.audit.merged_collections},
                 {"matmul_share", run.matmul_share}};
  nlohmann::json plans = nlohmann::json::array();
  for (const PlanLogEntry& p : run.plans) {
    plans.push_back({{"epoch", p.epoch},
                     {"iteration", p.iteration},
                     {"z", p.z},
                     {"lambda", p.lambda},
                     {"beta", p.beta},
                     {"migration_group", p.migration_group},
                     {"resize_group", p.resize_group}});
  }
  j["plans"] = plans;
  if (run.cost_model) j["cost_model"] = to_json(*run.cost_model);
  nlohmann::json checks = nlohmann::json::array();
  bool all = true;
  for (const AuditCheck& c : audit) {
    checks.push_back({{"name", c.name}, {"pass", c.pass}, {"detail", c.detail}});
    all = all && c.pass;
  }
  j["audit"] = {{"pass", all}, {"checks", checks}};
  return j;
}

void emit_metrics(const ExperimentConfig& cfg, const RunResult& run,
                  const std::vector<AuditCheck>& audit,
                  const std::string& dir) {
  if (run.records.empty()) {
    throw InputError("no metric records to write");
  }
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir + "': " + ec.message());
  const std::filesystem::path base(dir);
  write_metrics_csv(run.records, (base / "metrics.csv").string());
  std::ofstream f(base / "summary.json", std::ios::binary);
  if (!f) throw IoError("cannot write summary into '" + dir + "'");
  f << run_summary(cfg, run, audit).dump(2) << '\n';
}

}  // namespace tpflex
