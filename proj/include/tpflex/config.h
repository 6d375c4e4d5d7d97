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
#include "tpflex/comm.h"
#include "tpflex/migration.h"
#include "tpflex/model.h"
#include "tpflex/resize.h"
#include "tpflex/tensor.h"

namespace tpflex {

enum class Mode {
  kBaseline,
  kZeroRd,
  kZeroPri,
  kZeroPriDiffE,
  kZeroPriDiffR,
  kMig,
  kSemi,
};

std::string to_string(Mode mode);
Mode parse_mode(const std::string& name);
bool is_zero_mode(Mode mode);

// Epoch range [first, last] (1-based, inclusive) during which the listed
// ranks run with the matching slowdowns.
struct HeteroEntry {
  int first = 1;
  int last = 1;
  std::vector<int> ranks;
  std::vector<double> chi;
};

struct HeterogeneityProfile {
  std::vector<HeteroEntry> schedule;

  // Straggler set advances by `nu` ranks every `period` epochs.
  static HeterogeneityProfile round_robin(int epochs, int e, double chi,
                                          int nu = 1, int period = 1);
  // Ranks 1..k slowed by chi[0..k) for every epoch.
  static HeterogeneityProfile fixed(int epochs, const std::vector<double>& chi);

  double chi(int epoch, int rank) const;
  int nu(int epoch) const;  // ranks with chi > 1
  void validate(int e, int epochs) const;
};

// Accepted forms: "CHI" or "rr:CHI[:NU[:PERIOD]]" for round robin,
// "fixed:C1,C2,..." for a static set of slow ranks, "none" for homogeneous.
HeterogeneityProfile parse_chi_spec(const std::string& spec, int e,
                                    int epochs);

struct ExperimentConfig {
  ModelConfig model;
  Mode mode = Mode::kBaseline;
  int epochs = 2;
  int iterations_per_epoch = 10;
  std::uint64_t seed = 42;
  ImputationPolicy imputation = ImputationPolicy::kZero;
  CostParams cost;

  PriorityConfig priority;  // theta_iter, alpha, gamma_max, incremental
  double refresh_threshold = 0.10;
  std::optional<double> fixed_gamma;
  Criterion criterion = Criterion::kAvg;

  CollectionMode collection = CollectionMode::kMerged;
  MigrationPrimitive primitive = MigrationPrimitive::kBroadcastReduce;

  double epsilon = 0.02;
  std::vector<double> sample_gammas = {0.0, 0.25, 0.5, 0.75, 1.0};
  std::optional<std::size_t> lambda;

  // Either a spec string (see parse_chi_spec) or an explicit schedule,
  // which takes precedence when non-empty.
  std::string chi_spec = "none";
  std::vector<HeteroEntry> schedule;

  std::size_t train_size = 256;
  std::size_t eval_size = 256;
  double data_noise = 0.5;

  std::string output;  // directory; empty disables file output

  HeterogeneityProfile profile() const;
  // Throws ConfigError naming the offending key.
  void validate() const;
};

ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path);
nlohmann::json to_json(const ExperimentConfig& cfg);

}  // namespace tpflex
