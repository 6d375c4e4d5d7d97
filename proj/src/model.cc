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

#include "tpflex/model.h"

#include <algorithm>
#include <cmath>
#include <string>

#include "tpflex/error.h"
#include "tpflex/rng.h"

namespace tpflex {
namespace {

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

std::size_t idx(int rank) { return static_cast<std::size_t>(rank - 1); }

Matrix uniform_matrix(std::size_t rows, std::size_t cols, double bound,
                      Rng& rng) {
  Matrix m(rows, cols);
  for (double& v : m.data()) v = rng.uniform(-bound, bound);
  return m;
}

std::vector<Matrix> replicate(const Matrix& m, int e) {
  return std::vector<Matrix>(static_cast<std::size_t>(e), m);
}

void check_positive(long long v, const char* key) {
  if (v < 1) {
    throw ConfigError(std::string("model.") + key + " must be at least 1");
  }
}

}  // namespace

void ModelConfig::validate() const {
  check_positive(depth, "depth");
  check_positive(static_cast<long long>(hs), "hs");
  check_positive(static_cast<long long>(expansion), "expansion");
  check_positive(static_cast<long long>(bs), "bs");
  check_positive(static_cast<long long>(sql), "sql");
  check_positive(e, "e");
  check_positive(static_cast<long long>(classes), "classes");
  const auto ue = static_cast<std::size_t>(e);
  if (hs % ue != 0) {
    throw ConfigError("model.hs=" + std::to_string(hs) +
                      " is not divisible by model.e=" + std::to_string(e));
  }
  if (inner() % ue != 0) {
    throw ConfigError("model.expansion*hs=" + std::to_string(inner()) +
                      " is not divisible by model.e=" + std::to_string(e));
  }
  if (!(lr >= 0.0) || !std::isfinite(lr)) {
    throw ConfigError("model.lr must be a finite non-negative number");
  }
}

TPModel TPModel::create(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  TPModel model;
  model.cfg = cfg;
  const double b1 = 1.0 / std::sqrt(static_cast<double>(cfg.hs));
  const double b2 = 1.0 / std::sqrt(static_cast<double>(cfg.inner()));
  std::uint64_t salt = 0;
  for (int k = 0; k < cfg.depth; ++k) {
    Rng r1 = Rng::stream(seed, salt++);
    Rng r2 = Rng::stream(seed, salt++);
    const std::string base = "ffn" + std::to_string(k + 1);
    FFNBlock block;
    block.lin1 = TPLinear::from_dense(
        LinearMode::kColumn, base + ".lin1",
        uniform_matrix(cfg.inner(), cfg.hs, b1, r1), cfg.e);
    block.lin2 = TPLinear::from_dense(
        LinearMode::kRow, base + ".lin2",
        uniform_matrix(cfg.hs, cfg.inner(), b2, r2), cfg.e);
    model.blocks.push_back(std::move(block));
  }
  Rng rh = Rng::stream(seed, salt);
  model.head = uniform_matrix(cfg.classes, cfg.hs, b1, rh);
  return model;
}

TPLinear& TPModel::layer(std::size_t i) {
  FFNBlock& b = blocks.at(i / 2);
  return i % 2 == 0 ? b.lin1 : b.lin2;
}

const TPLinear& TPModel::layer(std::size_t i) const {
  const FFNBlock& b = blocks.at(i / 2);
  return i % 2 == 0 ? b.lin1 : b.lin2;
}

std::vector<Matrix> TPModel::dense_weights() const {
  std::vector<Matrix> out;
  for (std::size_t i = 0; i < num_layers(); ++i) out.push_back(layer(i).dense());
  out.push_back(head);
  return out;
}

double gelu(double x) {
  return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x)));
}

double gelu_grad(double x) {
  const double t = std::tanh(kGeluC * (x + kGeluA * x * x * x));
  return 0.5 * (1.0 + t) +
         0.5 * x * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * x * x);
}

Matrix ffn_forward(const FFNBlock& block, const Matrix& x, Communicator& comm,
                   const LayerControl& c1, const LayerControl& c2,
                   ResizeRuntime& rt, FFNSaved& saved, LayerAudit* audit) {
  const int e = comm.size();
  saved.pre_activation =
      linear_forward(block.lin1, replicate(x, e), comm, c1, rt, saved.lin1,
                     audit);
  std::vector<Matrix> act(saved.pre_activation.size());
  for (int r = 1; r <= e; ++r) {
    act[idx(r)] = saved.pre_activation[idx(r)];
    for (double& v : act[idx(r)].data()) v = gelu(v);
    comm.charge_elementwise(r, act[idx(r)].size());
  }
  auto partial = linear_forward(block.lin2, act, comm, c2, rt, saved.lin2, audit);
  return comm.all_reduce_sum(partial).front();
}

FFNGrads ffn_backward(const FFNBlock& block, const FFNSaved& saved,
                      const Matrix& grad_output, Communicator& comm,
                      const LayerControl& c1, const LayerControl& c2,
                      ResizeRuntime& rt, LayerAudit* audit) {
  const int e = comm.size();
  LinearGrads g2 = linear_backward(block.lin2, saved.lin2,
                                   replicate(grad_output, e), comm, c2, rt,
                                   audit);
  std::vector<Matrix> dh = std::move(g2.grad_input);
  for (int r = 1; r <= e; ++r) {
    Matrix& d = dh[idx(r)];
    const Matrix& pre = saved.pre_activation[idx(r)];
    for (std::size_t i = 0; i < d.size(); ++i) {
      d.data()[i] *= gelu_grad(pre.data()[i]);
    }
    comm.charge_elementwise(r, d.size());
  }
  LinearGrads g1 = linear_backward(block.lin1, saved.lin1, dh, comm, c1, rt,
                                   audit);
  FFNGrads out;
  out.grad_input = comm.all_reduce_sum(g1.grad_input).front();
  out.grad_lin1 = std::move(g1.grad_weight);
  out.grad_lin2 = std::move(g2.grad_weight);
  return out;
}

LossResult loss_and_grad(const Matrix& logits, const std::vector<int>& labels) {
  const std::size_t n = logits.rows();
  const std::size_t c = logits.cols();
  if (labels.size() != n) {
    throw ShapeError("loss: " + std::to_string(labels.size()) +
                     " labels for logits " + logits.shape_string());
  }
  LossResult out;
  out.grad = Matrix(n, c);
  for (std::size_t i = 0; i < n; ++i) {
    const int label = labels[i];
    if (label < 1 || static_cast<std::size_t>(label) > c) {
      throw LabelError("label " + std::to_string(label) + " at row " +
                       std::to_string(i) + " outside [1, " +
                       std::to_string(c) + "]");
    }
    const auto row = logits.row(i);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double v : row) z += std::exp(v - mx);
    const double log_z = mx + std::log(z);
    out.loss += log_z - row[static_cast<std::size_t>(label - 1)];
    for (std::size_t j = 0; j < c; ++j) {
      const double p = std::exp(row[j] - log_z);
      out.grad(i, j) =
          (p - (j + 1 == static_cast<std::size_t>(label) ? 1.0 : 0.0)) /
          static_cast<double>(n);
    }
  }
  out.loss /= static_cast<double>(n);
  return out;
}

void sgd_update(Matrix& w, const Matrix& grad, double lr) {
  if (w.rows() != grad.rows() || w.cols() != grad.cols()) {
    throw ShapeError("sgd: weight " + w.shape_string() + " vs gradient " +
                     grad.shape_string());
  }
  for (std::size_t i = 0; i < w.size(); ++i) {
    w.data()[i] -= lr * grad.data()[i];
  }
}

const LayerControl& IterationControl::layer(std::size_t i) const {
  static const LayerControl kPlain;
  return layers.empty() ? kPlain : layers.at(i);
}

ForwardTrace model_forward(const TPModel& model, const Matrix& x,
                           Communicator& comm, const IterationControl& ctl,
                           ResizeRuntime& rt, LayerAudit* audit) {
  ForwardTrace trace;
  Matrix cur = x;
  for (std::size_t k = 0; k < model.blocks.size(); ++k) {
    trace.block_inputs.push_back(cur);
    trace.blocks.emplace_back();
    cur = ffn_forward(model.blocks[k], cur, comm, ctl.layer(2 * k),
                      ctl.layer(2 * k + 1), rt, trace.blocks.back(), audit);
  }
  trace.features = cur;
  // Every rank evaluates the replicated head itself.
  WorkCounter acc;
  trace.logits = matmul_nt(cur, model.head, acc);
  for (int r = 1; r <= comm.size(); ++r) {
    comm.add_fixed_flops(r, acc.flops);
    comm.charge_matmul(r, acc.flops);
  }
  return trace;
}

ModelGrads compute_gradients(const TPModel& model, const Batch& batch,
                             Communicator& comm, const IterationControl& ctl,
                             ResizeRuntime& rt, double* loss,
                             LayerAudit* audit) {
  if (batch.x.cols() != model.cfg.hs) {
    throw ShapeError("batch input " + batch.x.shape_string() +
                     " does not match hidden size " +
                     std::to_string(model.cfg.hs));
  }
  if (!ctl.layers.empty() && ctl.layers.size() != model.num_layers()) {
    throw PlanError("iteration control covers " +
                    std::to_string(ctl.layers.size()) + " of " +
                    std::to_string(model.num_layers()) + " layers");
  }
  ForwardTrace trace = model_forward(model, batch.x, comm, ctl, rt, audit);
  LossResult lr = loss_and_grad(trace.logits, batch.labels);
  for (int r = 1; r <= comm.size(); ++r) {
    comm.charge_elementwise(r, 4 * trace.logits.size());
  }
  if (loss) *loss = lr.loss;

  ModelGrads grads;
  grads.layers.resize(model.num_layers());
  WorkCounter acc;
  grads.head = matmul_tn(lr.grad, trace.features, acc);
  Matrix g = matmul(lr.grad, model.head, acc);
  for (int r = 1; r <= comm.size(); ++r) {
    comm.add_fixed_flops(r, acc.flops);
    comm.charge_matmul(r, acc.flops);
  }
  for (std::size_t k = model.blocks.size(); k-- > 0;) {
    FFNGrads fg = ffn_backward(model.blocks[k], trace.blocks[k], g, comm,
                               ctl.layer(2 * k), ctl.layer(2 * k + 1), rt,
                               audit);
    grads.layers[2 * k] = std::move(fg.grad_lin1);
    grads.layers[2 * k + 1] = std::move(fg.grad_lin2);
    g = std::move(fg.grad_input);
  }
  return grads;
}

void apply_gradients(TPModel& model, const ModelGrads& grads,
                     Communicator& comm) {
  const double lr = model.cfg.lr;
  for (std::size_t i = 0; i < model.num_layers(); ++i) {
    TPLinear& layer = model.layer(i);
    for (int r = 1; r <= comm.size(); ++r) {
      sgd_update(layer.shards[idx(r)], grads.layers[i][idx(r)], lr);
      comm.charge_elementwise(r, 2 * layer.shards[idx(r)].size());
    }
  }
  sgd_update(model.head, grads.head, lr);
  for (int r = 1; r <= comm.size(); ++r) {
    comm.charge_elementwise(r, 2 * model.head.size());
  }
}

IterationReport train_iteration(TPModel& model, const Batch& batch,
                                Communicator& comm,
                                const IterationControl& ctl,
                                ResizeRuntime& rt) {
  const int e = comm.size();
  const std::vector<VirtualClock> before = comm.clocks();
  const std::uint64_t ar_before =
      comm.counts().count(CommTag::kModel, CommPattern::kAllReduce);
  rt.clear_lineage();

  IterationReport rep;
  ModelGrads grads =
      compute_gradients(model, batch, comm, ctl, rt, &rep.loss, &rep.audit);
  apply_gradients(model, grads, comm);
  rt.clear_lineage();

  rep.all_reduces =
      comm.counts().count(CommTag::kModel, CommPattern::kAllReduce) -
      ar_before;
  const double rate = comm.cost().compute_rate;
  for (int r = 1; r <= e; ++r) {
    const VirtualClock& a = before[idx(r)];
    const VirtualClock& b = comm.clock(r);
    const double chi = comm.slowdown(r);
    const double busy = b.busy - a.busy;
    const double mm = b.matmul - a.matmul;
    const double help = b.matmul_help - a.matmul_help;
    const double over = b.overhead - a.overhead;
    const double full = b.own_flops_full - a.own_flops_full;
    const double fixed = b.fixed_flops - a.fixed_flops;
    rep.t_own.push_back(busy);
    rep.m_own.push_back(mm);
    rep.m_nat.push_back(full * chi / rate);
    rep.t_nat.push_back(b.elementwise - a.elementwise + rep.m_nat.back() +
                        fixed * chi / rate);
    rep.compute.push_back(mm + help + (b.elementwise - a.elementwise) + over);
    rep.comm.push_back(b.comm - a.comm);
    rep.flops.push_back((mm + help) * rate / chi);
  }
  return rep;
}

double evaluate_accuracy(const TPModel& model, const Batch& data) {
  Communicator comm(model.cfg.e);
  ResizeRuntime rt(model.cfg.e);
  ForwardTrace trace =
      model_forward(model, data.x, comm, IterationControl{}, rt);
  if (data.labels.size() != trace.logits.rows()) {
    throw ShapeError("evaluation labels do not match inputs");
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < trace.logits.rows(); ++i) {
    const auto row = trace.logits.row(i);
    const auto best = static_cast<int>(
        std::max_element(row.begin(), row.end()) - row.begin());
    if (best + 1 == data.labels[i]) ++hits;
  }
  return trace.logits.rows() == 0
             ? 0.0
             : static_cast<double>(hits) /
                   static_cast<double>(trace.logits.rows());
}

}  // namespace tpflex
