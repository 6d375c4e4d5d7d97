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
#include <vector>

#include "tpflex/comm.h"
#include "tpflex/layers.h"
#include "tpflex/tensor.h"

namespace tpflex {

struct ModelConfig {
  int depth = 2;              // FFN blocks
  std::size_t hs = 16;        // hidden size
  std::size_t expansion = 4;  // inner width multiplier
  std::size_t bs = 4;         // batch size
  std::size_t sql = 2;        // sequence length
  int e = 1;                  // tensor-parallel degree
  double lr = 0.05;
  std::size_t classes = 4;

  std::size_t rows() const { return bs * sql; }
  std::size_t inner() const { return expansion * hs; }
  // Throws ConfigError on an invalid combination.
  void validate() const;
};

struct FFNBlock {
  TPLinear lin1;  // column mode, hs -> expansion*hs
  TPLinear lin2;  // row mode, expansion*hs -> hs
};

// A stack of FFN blocks followed by a classifier head that every rank holds
// in full.
struct TPModel {
  ModelConfig cfg;
  std::vector<FFNBlock> blocks;
  Matrix head;  // [classes x hs]

  // Weights are drawn densely per layer from the seed and then split, so
  // the same seed yields the same function for every parallel degree.
  static TPModel create(const ModelConfig& cfg, std::uint64_t seed);

  std::size_t num_layers() const { return 2 * blocks.size(); }
  // Layer 2k is block k's lin1, layer 2k+1 its lin2.
  TPLinear& layer(std::size_t i);
  const TPLinear& layer(std::size_t i) const;
  // Dense weights for every layer followed by the head.
  std::vector<Matrix> dense_weights() const;
};

struct Batch {
  Matrix x;                 // [bs*sql x hs]
  std::vector<int> labels;  // one per row, in [1, classes]
};

double gelu(double x);
double gelu_grad(double x);

struct FFNSaved {
  LinearSaved lin1;
  LinearSaved lin2;
  std::vector<Matrix> pre_activation;  // by rank-1
};

// Y = lin2(gelu(lin1(X))) with exactly one all-reduce. `x` is replicated.
Matrix ffn_forward(const FFNBlock& block, const Matrix& x, Communicator& comm,
                   const LayerControl& c1, const LayerControl& c2,
                   ResizeRuntime& rt, FFNSaved& saved,
                   LayerAudit* audit = nullptr);

struct FFNGrads {
  Matrix grad_input;               // replicated
  std::vector<Matrix> grad_lin1;   // by rank-1
  std::vector<Matrix> grad_lin2;
};

// Exactly one all-reduce, on the input gradient of lin1.
FFNGrads ffn_backward(const FFNBlock& block, const FFNSaved& saved,
                      const Matrix& grad_output, Communicator& comm,
                      const LayerControl& c1, const LayerControl& c2,
                      ResizeRuntime& rt, LayerAudit* audit = nullptr);

struct LossResult {
  double loss = 0.0;
  Matrix grad;  // d loss / d logits
};

// Mean softmax cross-entropy over rows. Labels are 1-based.
LossResult loss_and_grad(const Matrix& logits, const std::vector<int>& labels);

void sgd_update(Matrix& w, const Matrix& grad, double lr);

// Per-layer controls for one iteration. An empty `layers` means plain
// tensor parallelism.
struct IterationControl {
  std::vector<LayerControl> layers;
  const LayerControl& layer(std::size_t i) const;
};

struct ModelGrads {
  std::vector<std::vector<Matrix>> layers;  // [layer][rank-1]
  Matrix head;
};

struct ForwardTrace {
  std::vector<FFNSaved> blocks;
  std::vector<Matrix> block_inputs;
  Matrix features;  // output of the last block
  Matrix logits;
};

ForwardTrace model_forward(const TPModel& model, const Matrix& x,
                           Communicator& comm, const IterationControl& ctl,
                           ResizeRuntime& rt, LayerAudit* audit = nullptr);

ModelGrads compute_gradients(const TPModel& model, const Batch& batch,
                             Communicator& comm, const IterationControl& ctl,
                             ResizeRuntime& rt, double* loss = nullptr,
                             LayerAudit* audit = nullptr);

void apply_gradients(TPModel& model, const ModelGrads& grads, Communicator& comm);

struct IterationReport {
  double loss = 0.0;
  std::vector<double> t_own;    // busy time of the iteration
  std::vector<double> m_own;    // own matmul time
  std::vector<double> t_nat;    // compute time of the unbalanced workload
  std::vector<double> m_nat;    // sheddable matmul time without balancing
  std::vector<double> compute;  // matmul + elementwise + overhead
  std::vector<double> comm;
  std::vector<double> flops;    // matmul FLOPs executed, own and on behalf
  std::uint64_t all_reduces = 0;  // model-tagged
  LayerAudit audit;
};

IterationReport train_iteration(TPModel& model, const Batch& batch,
                                Communicator& comm,
                                const IterationControl& ctl,
                                ResizeRuntime& rt);

// Argmax accuracy of the model on `x` with 1-based labels.
double evaluate_accuracy(const TPModel& model, const Batch& data);

}  // namespace tpflex
