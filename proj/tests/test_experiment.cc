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

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "tpflex/error.h"
#include "tpflex/experiment.h"

namespace tpflex {
namespace {

ExperimentConfig small_config(Mode mode, const std::string& chi) {
  ExperimentConfig c;
  c.model.e = 4;
  c.model.depth = 2;
  c.model.hs = 32;
  c.model.bs = 4;
  c.model.sql = 2;
  c.mode = mode;
  c.epochs = 4;
  c.iterations_per_epoch = 30;
  c.seed = 11;
  c.cost.compute_rate = 1000.0;
  c.cost.alpha = 0.1;
  c.cost.beta_net = 1e-6;
  c.chi_spec = chi;
  if (mode == Mode::kZeroPriDiffE) c.fixed_gamma = 0.5;
  c.validate();
  return c;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

TEST(Dataset, ShapesLabelsAndSplits) {
  const Dataset a = make_dataset(40, 16, 4, 0.5, 3, 0);
  const Dataset b = make_dataset(40, 16, 4, 0.5, 3, 1);
  EXPECT_EQ(a.x.rows(), 40u);
  EXPECT_EQ(a.x.cols(), 16u);
  for (int l : a.labels) {
    EXPECT_GE(l, 1);
    EXPECT_LE(l, 4);
  }
  EXPECT_NE(a.x, b.x);
  EXPECT_EQ(a.x, make_dataset(40, 16, 4, 0.5, 3, 0).x);
  const Batch wrap = a.batch(9, 5);  // rows 45..49 wrap to 5..9
  EXPECT_EQ(wrap.labels[0], a.labels[5]);
}

TEST(Experiment, OneRtRowPerEpochAndRank) {
  ExperimentConfig c = small_config(Mode::kZeroPri, "rr:4");
  c.epochs = 2;
  c.iterations_per_epoch = 5;
  const RunResult r = run_experiment(c);
  ASSERT_EQ(r.epoch_rt.size(), 2u);
  ASSERT_EQ(r.records.size(), 8u);
  for (const EpochRecord& rec : r.records) {
    EXPECT_EQ(rec.mode, "zero-pri");
    // Every rank reports the synchronized epoch time.
    EXPECT_EQ(rec.rt, r.epoch_rt[static_cast<std::size_t>(rec.epoch - 1)]);
  }
  EXPECT_EQ(r.iterations, 10u);
}

TEST(Experiment, EpochRtIsTheSlowestRank) {
  ExperimentConfig c = small_config(Mode::kBaseline, "rr:4");
  c.epochs = 1;
  c.iterations_per_epoch = 3;
  const RunResult r = run_experiment(c);
  double slowest = 0.0;
  for (const VirtualClock& clk : r.clocks) slowest = std::max(slowest, clk.now);
  EXPECT_DOUBLE_EQ(r.epoch_rt[0], slowest);
}

TEST(Experiment, BaselineStragglerAtLeastTripleRuntime) {
  const double homo = run_experiment(small_config(Mode::kBaseline, "none")).mean_rt();
  const double slow = run_experiment(small_config(Mode::kBaseline, "rr:8")).mean_rt();
  EXPECT_GE(slow, 3.0 * homo) << slow << " vs " << homo;
}

// Each new straggler costs one unbalanced iteration before the controller
// reacts, so the epochs have to be long enough to amortize it.
ExperimentConfig trend_config(Mode mode, const std::string& chi) {
  ExperimentConfig c = small_config(mode, chi);
  c.model.depth = 4;
  c.model.hs = 64;
  c.epochs = 2;
  c.iterations_per_epoch = 100;
  c.validate();
  return c;
}

TEST(Experiment, ZeroPriStaysNearHomogeneous) {
  const double homo = run_experiment(trend_config(Mode::kBaseline, "none")).mean_rt();
  const double zero = run_experiment(trend_config(Mode::kZeroPri, "rr:8")).mean_rt();
  EXPECT_LE(zero, 1.15 * homo) << zero << " vs " << homo;
}

TEST(Experiment, BalancingModesBeatBaseline) {
  const double base = run_experiment(small_config(Mode::kBaseline, "rr:6")).mean_rt();
  for (Mode m : {Mode::kZeroRd, Mode::kZeroPriDiffR, Mode::kZeroPriDiffE,
                 Mode::kMig, Mode::kSemi}) {
    const RunResult r = run_experiment(small_config(m, "rr:6"));
    EXPECT_LT(r.mean_rt(), base) << to_string(m);
    for (const AuditCheck& a : audit_run(small_config(m, "rr:6"), r)) {
      EXPECT_TRUE(a.pass) << to_string(m) << " " << a.name << ": " << a.detail;
    }
  }
}

TEST(Experiment, HomogeneousBalancingIsIdle) {
  const RunResult base = run_experiment(small_config(Mode::kBaseline, "none"));
  const RunResult semi = run_experiment(small_config(Mode::kSemi, "none"));
  EXPECT_EQ(semi.audit.pruned_matmuls, 0u);
  EXPECT_EQ(semi.audit.migrated_matmuls, 0u);
  // SEMI never sheds work, so the weights follow the plain run exactly.
  ASSERT_EQ(base.final_weights.size(), semi.final_weights.size());
  for (std::size_t k = 0; k < base.final_weights.size(); ++k) {
    EXPECT_EQ(base.final_weights[k], semi.final_weights[k]);
  }
}

TEST(Experiment, MigKeepsTheBaselineMath) {
  ExperimentConfig b = small_config(Mode::kBaseline, "rr:4");
  ExperimentConfig m = small_config(Mode::kMig, "rr:4");
  b.iterations_per_epoch = m.iterations_per_epoch = 8;
  const RunResult rb = run_experiment(b);
  const RunResult rm = run_experiment(m);
  EXPECT_GT(rm.audit.migrated_matmuls, 0u);
  for (std::size_t k = 0; k < rb.final_weights.size(); ++k) {
    EXPECT_LE(max_abs_diff(rb.final_weights[k], rm.final_weights[k]), 1e-8);
  }
}

TEST(Experiment, AuditCatchesTamperedRuns) {
  const ExperimentConfig c = small_config(Mode::kBaseline, "rr:4");
  RunResult r = run_experiment(c);
  r.audit.pruned_matmuls = 1;
  r.all_reduces += 1;
  int failed = 0;
  for (const AuditCheck& a : audit_run(c, r)) failed += a.pass ? 0 : 1;
  EXPECT_EQ(failed, 2);
}

TEST(Metrics, CsvHeaderAndRoundTrip) {
  ExperimentConfig c = small_config(Mode::kSemi, "rr:4");
  c.epochs = 2;
  c.iterations_per_epoch = 6;
  const RunResult r = run_experiment(c);
  const std::string csv = metrics_csv(r.records);
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "epoch,mode,rank,rt,compute_t,comm_t,flops,gamma,beta,lambda,loss,"
            "acc");
  const std::string path = ::testing::TempDir() + "tpflex_metrics.csv";
  write_metrics_csv(r.records, path);
  EXPECT_EQ(read_metrics_csv(path), r.records);
  std::filesystem::remove(path);
}

TEST(Metrics, EmptyRecordsAreRejected) {
  EXPECT_THROW(write_metrics_csv({}, ::testing::TempDir() + "never.csv"),
               InputError);
}

TEST(Metrics, UnwritablePathIsAnIoError) {
  const RunResult r = [] {
    ExperimentConfig c = small_config(Mode::kBaseline, "none");
    c.epochs = 1;
    c.iterations_per_epoch = 1;
    return run_experiment(c);
  }();
  EXPECT_THROW(write_metrics_csv(r.records, "/nonexistent-dir/x/metrics.csv"),
               IoError);
}

TEST(Metrics, MalformedCsvIsRejected) {
  const std::string path = ::testing::TempDir() + "tpflex_bad.csv";
  {
    std::ofstream out(path);
    out << "epoch,mode\n1,baseline\n";
  }
  EXPECT_THROW(read_metrics_csv(path), IoError);
  std::filesystem::remove(path);
}

TEST(Metrics, RerunIsByteIdentical) {
  const std::filesystem::path dir =
      std::filesystem::path(::testing::TempDir()) / "tpflex_rerun";
  ExperimentConfig c = small_config(Mode::kSemi, "rr:5");
  c.epochs = 2;
  c.iterations_per_epoch = 10;
  std::string first, summary;
  for (int pass = 0; pass < 2; ++pass) {
    const RunResult r = run_experiment(c);
    emit_metrics(c, r, audit_run(c, r), dir.string());
    const std::string csv = slurp((dir / "metrics.csv").string());
    const std::string js = slurp((dir / "summary.json").string());
    if (pass == 0) {
      first = csv;
      summary = js;
    } else {
      EXPECT_EQ(csv, first);
      EXPECT_EQ(js, summary);
    }
  }
  const auto j = nlohmann::json::parse(summary);
  EXPECT_TRUE(j.contains("config"));
  EXPECT_TRUE(j.contains("audit"));
  EXPECT_TRUE(j.contains("cost_model"));
  std::filesystem::remove_all(dir);
}

TEST(Metrics, SeedsChangeTheOutput) {
  ExperimentConfig c = small_config(Mode::kZeroRd, "rr:4");
  c.epochs = 1;
  c.iterations_per_epoch = 5;
  const std::string a = metrics_csv(run_experiment(c).records);
  c.seed = 12;
  EXPECT_NE(a, metrics_csv(run_experiment(c).records));
}

}  // namespace
}  // namespace tpflex
