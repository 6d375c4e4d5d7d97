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

// Command-line harness: run experiments, probe pretest cost curves and run
// the invariant audit.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "tpflex/config.h"
#include "tpflex/error.h"
#include "tpflex/experiment.h"
#include "tpflex/log.h"
#include "tpflex/semi.h"

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kAuditFailure = 2;

struct RunArgs {
  std::string config;
  std::optional<std::string> mode;
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs;
  std::optional<std::string> chi;
  std::optional<std::size_t> lambda;
  std::optional<std::string> out;
};

tpflex::ExperimentConfig resolve(const RunArgs& a) {
  tpflex::ExperimentConfig cfg = tpflex::load_config(a.config);
  if (a.mode) {
    cfg.mode = tpflex::parse_mode(*a.mode);
    if (cfg.mode == tpflex::Mode::kZeroPriDiffE && !cfg.fixed_gamma) {
      cfg.fixed_gamma = 0.5;
    }
  }
  if (a.seed) cfg.seed = *a.seed;
  if (a.epochs) cfg.epochs = *a.epochs;
  if (a.chi) {
    cfg.chi_spec = *a.chi;
    cfg.schedule.clear();
  }
  if (a.lambda) cfg.lambda = *a.lambda;
  if (a.out) cfg.output = *a.out;
  cfg.validate();
  return cfg;
}

bool print_audit(const std::vector<tpflex::AuditCheck>& checks) {
  bool all = true;
  for (const auto& c : checks) {
    std::printf("%s %s: %s\n", c.pass ? "PASS" : "FAIL", c.name.c_str(),
                c.detail.c_str());
    all = all && c.pass;
  }
  return all;
}

int cmd_run(const RunArgs& a) {
  const tpflex::ExperimentConfig cfg = resolve(a);
  const tpflex::RunResult run = tpflex::run_experiment(cfg);
  const auto checks = tpflex::audit_run(cfg, run);
  if (!cfg.output.empty()) {
    tpflex::emit_metrics(cfg, run, checks, cfg.output);
  } else {
    std::cout << tpflex::metrics_csv(run.records);
  }
  for (std::size_t ep = 0; ep < run.epoch_rt.size(); ++ep) {
    std::fprintf(stderr, "epoch %zu rt %.6g loss %.6g acc %.4f lambda %zu\n",
                 ep + 1, run.epoch_rt[ep], run.epoch_loss[ep],
                 run.epoch_acc[ep], run.epoch_lambda[ep]);
  }
  for (const auto& c : checks) {
    if (!c.pass) {
      std::fprintf(stderr, "audit failure %s: %s\n", c.name.c_str(),
                   c.detail.c_str());
      return kAuditFailure;
    }
  }
  return kOk;
}

int cmd_pretest(const RunArgs& a) {
  const tpflex::ExperimentConfig cfg = resolve(a);
  tpflex::PretestOptions po;
  po.sample_gammas = cfg.sample_gammas;
  po.collection = cfg.collection;
  po.primitive = cfg.primitive;
  po.seed = cfg.seed;
  const tpflex::CostModel cm = tpflex::pretest_costs(cfg.model, cfg.cost, po);
  std::cout << tpflex::to_json(cm).dump(2) << '\n';
  return kOk;
}

int cmd_audit(const RunArgs& a) {
  const tpflex::ExperimentConfig cfg = resolve(a);
  const tpflex::RunResult run = tpflex::run_experiment(cfg);
  return print_audit(tpflex::audit_run(cfg, run)) ? kOk : kAuditFailure;
}

}  // namespace

int main(int argc, char** argv) {
  tpflex::init_logging();
  CLI::App app{"tpflex: heterogeneous tensor-parallel training simulator"};
  app.require_subcommand(1);

  RunArgs args;
  auto* run = app.add_subcommand("run", "run one experiment");
  run->add_option("--config", args.config, "JSON config")->required();
  run->add_option("--mode", args.mode, "balancing mode");
  run->add_option("--seed", args.seed, "RNG seed");
  run->add_option("--epochs", args.epochs, "epoch count");
  run->add_option("--chi", args.chi, "heterogeneity spec");
  run->add_option("--lambda", args.lambda, "forced migration group size");
  run->add_option("--out", args.out, "output directory");

  auto* pretest = app.add_subcommand("pretest", "fit resize/migration costs");
  pretest->add_option("--config", args.config, "JSON config")->required();

  auto* audit = app.add_subcommand("audit", "run the invariant audit");
  audit->add_option("--config", args.config, "JSON config")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfigError;
  }

  try {
    if (run->parsed()) return cmd_run(args);
    if (pretest->parsed()) return cmd_pretest(args);
    return cmd_audit(args);
  } catch (const tpflex::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfigError;
  } catch (const tpflex::IoError& e) {
    std::fprintf(stderr, "i/o error: %s\n", e.what());
    return kConfigError;
  } catch (const tpflex::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kAuditFailure;
  }
}
