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
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "tpflex/config.h"
#include "tpflex/layers.h"
#include "tpflex/model.h"
#include "tpflex/semi.h"

namespace tpflex {

// Gaussian clusters in a small latent space pushed through a fixed random
// projection to the hidden size. Labels are the cluster ids, 1-based.
struct Dataset {
  Matrix x;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  // Rows [i*rows, (i+1)*rows) modulo the dataset size.
  Batch batch(std::size_t i, std::size_t rows) const;
  Batch all() const { return {x, labels}; }
};

// Train and held-out sets share cluster centres and projection (drawn from
// `seed`) but use disjoint sample streams.
Dataset make_dataset(std::size_t n, std::size_t hs, std::size_t classes,
                     double noise, std::uint64_t seed, std::uint64_t split);

struct EpochRecord {
  int epoch = 0;
  std::string mode;
  int rank = 0;
  double rt = 0.0;
  double compute_t = 0.0;
  double comm_t = 0.0;
  double flops = 0.0;
  double gamma = 0.0;  // share of the rank's work shed at epoch end
  double beta = 0.0;   // migrated share of the shed work
  std::size_t lambda = 0;
  double loss = 0.0;
  double acc = 0.0;

  bool operator==(const EpochRecord&) const = default;
};

struct PlanLogEntry {
  int epoch = 0;
  int iteration = 0;
  std::size_t z = 0;
  std::size_t lambda = 0;
  double beta = 0.0;
  std::vector<int> migration_group;
  std::vector<int> resize_group;
};

struct RunResult {
  std::vector<EpochRecord> records;  // epoch-major, then rank
  std::vector<double> epoch_rt;
  std::vector<double> epoch_loss;
  std::vector<double> epoch_acc;
  std::vector<std::size_t> epoch_lambda;
  // [epoch-1][rank-1][layer] priority lists after each epoch update.
  std::vector<std::vector<std::vector<IndexSet>>> pri_lists;
  std::vector<PlanLogEntry> plans;
  std::optional<CostModel> cost_model;
  LayerAudit audit;
  std::uint64_t iterations = 0;
  std::uint64_t all_reduces = 0;  // model-tagged
  std::uint64_t refreshes = 0;
  CommCounts comm;
  std::vector<Matrix> final_weights;  // dense, as TPModel::dense_weights
  std::vector<VirtualClock> clocks;
  double matmul_share = 0.0;  // rank 1 matmul busy share

  double total_rt() const;
  double mean_rt() const;
};

RunResult run_experiment(const ExperimentConfig& cfg);

struct AuditCheck {
  std::string name;
  bool pass = false;
  std::string detail;
};

// Mode-level invariants of a finished run.
std::vector<AuditCheck> audit_run(const ExperimentConfig& cfg,
                                  const RunResult& run);

void write_metrics_csv(const std::vector<EpochRecord>& records,
                       const std::string& path);
std::vector<EpochRecord> read_metrics_csv(const std::string& path);
std::string metrics_csv(const std::vector<EpochRecord>& records);

nlohmann::json run_summary(const ExperimentConfig& cfg, const RunResult& run,
                           const std::vector<AuditCheck>& audit);

// Writes metrics.csv and summary.json into `dir`, creating it if needed.
void emit_metrics(const ExperimentConfig& cfg, const RunResult& run,
                  const std::vector<AuditCheck>& audit,
                  const std::string& dir);

nlohmann::json to_json(const CostModel& cm);

}  // namespace tpflex
