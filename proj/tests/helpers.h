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

#include <cmath>
#include <cstdint>
#include <vector>

#include "tpflex/model.h"
#include "tpflex/rng.h"
#include "tpflex/tensor.h"

namespace tpflex::testing {

inline Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed,
                            double scale = 1.0) {
  Rng rng = Rng::stream(seed, 0x7e57);
  Matrix m(r, c);
  for (double& v : m.data()) v = scale * rng.uniform(-1.0, 1.0);
  return m;
}

inline Batch random_batch(const ModelConfig& cfg, std::uint64_t seed) {
  Batch b;
  b.x = random_matrix(cfg.rows(), cfg.hs, seed);
  Rng rng = Rng::stream(seed, 0x1abe1);
  for (std::size_t i = 0; i < cfg.rows(); ++i) {
    b.labels.push_back(static_cast<int>(rng.below(cfg.classes)) + 1);
  }
  return b;
}

// Dense reference of x W^T without any communication.
inline Matrix dense_nt(const Matrix& x, const Matrix& w) {
  WorkCounter acc;
  return matmul_nt(x, w, acc);
}

inline Matrix gelu_all(Matrix m) {
  for (double& v : m.data()) v = gelu(v);
  return m;
}

inline double max_over(const std::vector<Matrix>& a,
                       const std::vector<Matrix>& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    d = std::max(d, max_abs_diff(a[i], b[i]));
  }
  return d;
}

// Loss of the model on a batch, evaluated without tensor parallelism.
inline double dense_loss(const TPModel& model, const Batch& batch) {
  Matrix h = batch.x;
  for (const FFNBlock& b : model.blocks) {
    h = dense_nt(gelu_all(dense_nt(h, b.lin1.dense())), b.lin2.dense());
  }
  return loss_and_grad(dense_nt(h, model.head), batch.labels).loss;
}

}  // namespace tpflex::testing
