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

#include "tpflex/comm.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <thread>

#include "tpflex/error.h"

namespace tpflex {

std::string to_string(CommPattern pattern) {
  switch (pattern) {
    case CommPattern::kBroadcast:
      return "broadcast";
    case CommPattern::kReduce:
      return "reduce";
    case CommPattern::kScatter:
      return "scatter";
    case CommPattern::kGather:
      return "gather";
    case CommPattern::kAllReduce:
      return "all_reduce";
    case CommPattern::kAllGather:
      return "all_gather";
  }
  return "unknown";
}

int tree_rounds(int group_size) {
  int rounds = 0;
  while ((1 << rounds) < group_size) {
    ++rounds;
  }
  return rounds;
}

double estimate_comm_time(std::size_t bytes, CommPattern pattern,
                          int group_size, const CostParams& cost) {
  if (group_size <= 1) {
    return 0.0;
  }
  const double msg = cost.alpha + static_cast<double>(bytes) * cost.beta_net;
  const double rounds = tree_rounds(group_size);
  const double serial = group_size - 1;
  switch (pattern) {
    case CommPattern::kBroadcast:
    case CommPattern::kReduce:
      return rounds * msg;
    case CommPattern::kScatter:
    case CommPattern::kGather:
      return serial * msg;
    case CommPattern::kAllReduce:
      return 2.0 * rounds * msg;
    case CommPattern::kAllGather: {
      const double piece =
          cost.alpha + static_cast<double>(bytes) / group_size * cost.beta_net;
      return serial * piece + rounds * msg;
    }
  }
  return 0.0;
}

std::uint64_t CommCounts::total(CommTag tag) const {
  std::uint64_t s = 0;
  for (auto c : calls[static_cast<std::size_t>(tag)]) {
    s += c;
  }
  return s;
}

Rendezvous::Rendezvous(std::string name, int group_size, int max_steps)
    : name_(std::move(name)),
      max_steps_(max_steps),
      slots_(static_cast<std::size_t>(group_size)) {}

void Rendezvous::enter(int rank, Matrix value) {
  if (rank < 1 || rank > static_cast<int>(slots_.size())) {
    throw RankError(name_ + ": rank " + std::to_string(rank) +
                    " outside [1, " + std::to_string(slots_.size()) + "]");
  }
  auto& slot = slots_[static_cast<std::size_t>(rank - 1)];
  if (slot.has_value()) {
    throw DeadlockError(name_ + ": rank " + std::to_string(rank) +
                        " entered the same collective twice");
  }
  slot = std::move(value);
}

bool Rendezvous::complete() const {
  return std::all_of(slots_.begin(), slots_.end(),
                     [](const auto& s) { return s.has_value(); });
}

std::vector<Matrix> Rendezvous::take() {
  // Ranks are advanced in lockstep, so no further arrivals can happen while
  // this call spins; the bound just mirrors the scheduler's step budget.
  for (int step = 0; step < max_steps_ && !complete(); ++step) {
  }
  if (!complete()) {
    std::string absent;
    for (std::size_t i = 0; i < slots_.size(); ++i) {
      if (!slots_[i].has_value()) {
        absent += (absent.empty() ? "" : ",") + std::to_string(i + 1);
      }
    }
    throw DeadlockError(name_ + ": collective not entered by rank(s) " +
                        absent + " within " + std::to_string(max_steps_) +
                        " scheduler steps");
  }
  std::vector<Matrix> out;
  out.reserve(slots_.size());
  for (auto& s : slots_) {
    out.push_back(std::move(*s));
    s.reset();
  }
  return out;
}

Communicator::Communicator(int group_size, CostParams cost)
    : size_(group_size), cost_(cost) {
  if (group_size < 1) {
    throw RankError("group size must be >= 1");
  }
  clocks_.resize(static_cast<std::size_t>(group_size));
  chi_.assign(static_cast<std::size_t>(group_size), 1.0);
}

void Communicator::check_rank(int rank) const {
  if (rank < 1 || rank > size_) {
    throw RankError("rank " + std::to_string(rank) + " outside [1, " +
                    std::to_string(size_) + "]");
  }
}

const VirtualClock& Communicator::clock(int rank) const {
  check_rank(rank);
  return clocks_[static_cast<std::size_t>(rank - 1)];
}

double Communicator::max_now() const {
  double m = 0.0;
  for (const auto& c : clocks_) {
    m = std::max(m, c.now);
  }
  return m;
}

void Communicator::set_slowdown(int rank, double chi) {
  check_rank(rank);
  if (!(chi >= 1.0)) {
    throw InputError("straggling skewness must be >= 1");
  }
  chi_[static_cast<std::size_t>(rank - 1)] = chi;
}

double Communicator::slowdown(int rank) const {
  check_rank(rank);
  return chi_[static_cast<std::size_t>(rank - 1)];
}

void Communicator::advance_busy(int rank, double t) {
  auto& c = clocks_[static_cast<std::size_t>(rank - 1)];
  c.now += t;
  c.busy += t;
}

double Communicator::matmul_time(int rank, std::uint64_t flops) const {
  return static_cast<double>(flops) / cost_.compute_rate * slowdown(rank);
}

void Communicator::charge_matmul(int rank, std::uint64_t flops,
                                 bool on_behalf) {
  check_rank(rank);
  const double t = matmul_time(rank, flops);
  advance_busy(rank, t);
  auto& c = clocks_[static_cast<std::size_t>(rank - 1)];
  if (on_behalf) {
    c.matmul_help += t;
  } else {
    c.matmul += t;
    c.own_flops_done += static_cast<double>(flops);
  }
  const double chi = slowdown(rank);
  if (cost_.wall_clock_us > 0.0 && chi > 1.0) {
    const double skew = t - t / chi;
    std::this_thread::sleep_for(
        std::chrono::duration<double, std::micro>(skew * cost_.wall_clock_us));
  }
}

void Communicator::charge_elementwise(int rank, std::uint64_t flops) {
  check_rank(rank);
  const double t = static_cast<double>(flops) / cost_.compute_rate;
  advance_busy(rank, t);
  clocks_[static_cast<std::size_t>(rank - 1)].elementwise += t;
}

void Communicator::charge_reduction(int rank, std::size_t values,
                                    CommTag tag) {
  if (tag == CommTag::kModel) {
    charge_elementwise(rank, values);
  } else {
    charge_overhead(rank, static_cast<double>(values) / cost_.compute_rate);
  }
}

void Communicator::charge_overhead(int rank, double time) {
  check_rank(rank);
  advance_busy(rank, time);
  clocks_[static_cast<std::size_t>(rank - 1)].overhead += time;
}

void Communicator::add_full_flops(int rank, std::uint64_t flops) {
  check_rank(rank);
  clocks_[static_cast<std::size_t>(rank - 1)].own_flops_full +=
      static_cast<double>(flops);
}

void Communicator::add_fixed_flops(int rank, std::uint64_t flops) {
  check_rank(rank);
  clocks_[static_cast<std::size_t>(rank - 1)].fixed_flops +=
      static_cast<double>(flops);
}

void Communicator::note(CommTag tag, CommPattern pattern, std::size_t bytes) {
  ++counts_.calls[static_cast<std::size_t>(tag)]
                 [static_cast<std::size_t>(pattern)];
  counts_.bytes[static_cast<std::size_t>(tag)] += bytes;
}

void Communicator::transfer(int src, int dst, std::size_t bytes, CommTag tag) {
  auto& s = clocks_[static_cast<std::size_t>(src - 1)];
  auto& d = clocks_[static_cast<std::size_t>(dst - 1)];
  const double c = cost_.alpha + static_cast<double>(bytes) * cost_.beta_net;
  const double end = std::max(s.now, d.now) + c;
  for (VirtualClock* clk : {&s, &d}) {
    clk->now = end;
    clk->busy += c;
    clk->comm += c;
    if (tag == CommTag::kMigration) {
      clk->comm_migration += c;
    }
  }
}

// Binomial schedule: in round k the holders are order[0, 2^k) and receiver
// i in [2^k, 2^(k+1)) is served by holder 2^(k+1)-1-i, so the most recent
// receivers relay first and the root sends only when it must.
void Communicator::tree_broadcast_time(const std::vector<int>& order,
                                       std::size_t bytes, CommTag tag) {
  const int n = static_cast<int>(order.size());
  for (int k = 0; (1 << k) < n; ++k) {
    const int lo = 1 << k;
    const int hi = std::min(n, lo << 1);
    for (int i = lo; i < hi; ++i) {
      const int sender = (lo << 1) - 1 - i;
      transfer(order[static_cast<std::size_t>(sender)],
               order[static_cast<std::size_t>(i)], bytes, tag);
    }
  }
}

void Communicator::tree_reduce_time(const std::vector<int>& order,
                                    std::size_t bytes, CommTag tag) {
  const int n = static_cast<int>(order.size());
  const int rounds = tree_rounds(n);
  for (int k = rounds - 1; k >= 0; --k) {
    const int lo = 1 << k;
    const int hi = std::min(n, lo << 1);
    for (int i = lo; i < hi; ++i) {
      const int parent = (lo << 1) - 1 - i;
      const int dst = order[static_cast<std::size_t>(parent)];
      transfer(order[static_cast<std::size_t>(i)], dst, bytes, tag);
      charge_reduction(dst, bytes / sizeof(double), tag);
    }
  }
}

void Communicator::check_participation(std::size_t n,
                                       const std::string& what) const {
  if (n == static_cast<std::size_t>(size_)) {
    return;
  }
  std::string absent;
  for (std::size_t r = n + 1; r <= static_cast<std::size_t>(size_); ++r) {
    absent += (absent.empty() ? "" : ",") + std::to_string(r);
  }
  throw DeadlockError(what + ": expected " + std::to_string(size_) +
                      " participants, got " + std::to_string(n) +
                      (absent.empty() ? "" : "; absent rank(s) " + absent));
}

void Communicator::check_same_shape(const std::vector<Matrix>& inputs,
                                    const std::string& what) const {
  check_participation(inputs.size(), what);
  for (std::size_t r = 1; r < inputs.size(); ++r) {
    if (inputs[r].rows() != inputs[0].rows() ||
        inputs[r].cols() != inputs[0].cols()) {
      throw CollectiveShapeError(what + ": rank " + std::to_string(r + 1) +
                                 " passed " + inputs[r].shape_string() +
                                 " but rank 1 passed " +
                                 inputs[0].shape_string());
    }
  }
}

std::vector<int> Communicator::normalize(int root,
                                         std::vector<int> participants) const {
  check_rank(root);
  if (participants.empty()) {
    participants.push_back(root);
    for (int r = 1; r <= size_; ++r) {
      if (r != root) participants.push_back(r);
    }
  }
  if (participants.front() != root) {
    throw RankError("participant list must start with the root");
  }
  std::vector<bool> seen(static_cast<std::size_t>(size_), false);
  for (int r : participants) {
    check_rank(r);
    if (seen[static_cast<std::size_t>(r - 1)]) {
      throw RankError("rank " + std::to_string(r) + " listed twice");
    }
    seen[static_cast<std::size_t>(r - 1)] = true;
  }
  return participants;
}

std::vector<Matrix> Communicator::all_reduce_sum(
    const std::vector<Matrix>& inputs, CommTag tag) {
  check_same_shape(inputs, "all_reduce_sum");
  Matrix total = inputs[0];
  for (std::size_t r = 1; r < inputs.size(); ++r) {
    total += inputs[r];
  }
  const std::size_t bytes = total.bytes();
  note(tag, CommPattern::kAllReduce, bytes);
  std::vector<int> order(static_cast<std::size_t>(size_));
  for (int r = 1; r <= size_; ++r) order[static_cast<std::size_t>(r - 1)] = r;
  tree_reduce_time(order, bytes, tag);
  tree_broadcast_time(order, bytes, tag);
  return std::vector<Matrix>(inputs.size(), total);
}

std::vector<Matrix> Communicator::all_gather_concat(
    const std::vector<Matrix>& inputs, Axis axis, CommTag tag) {
  check_participation(inputs.size(), "all_gather_concat");
  std::size_t rows = 0, cols = 0;
  for (std::size_t r = 0; r < inputs.size(); ++r) {
    const Matrix& m = inputs[r];
    const bool mismatch = axis == Axis::kCols ? m.rows() != inputs[0].rows()
                                              : m.cols() != inputs[0].cols();
    if (mismatch) {
      throw CollectiveShapeError("all_gather_concat: rank " +
                                 std::to_string(r + 1) + " passed " +
                                 m.shape_string() + " but rank 1 passed " +
                                 inputs[0].shape_string());
    }
    if (axis == Axis::kCols) {
      cols += m.cols();
    } else {
      rows += m.rows();
    }
  }
  Matrix out = axis == Axis::kCols ? Matrix(inputs[0].rows(), cols)
                                   : Matrix(rows, inputs[0].cols());
  std::size_t offset = 0;
  for (const Matrix& m : inputs) {
    if (axis == Axis::kCols) {
      out.set_col_block(offset, m);
      offset += m.cols();
    } else {
      out.set_row_block(offset, m);
      offset += m.rows();
    }
  }
  note(tag, CommPattern::kAllGather, out.bytes());
  for (int r = 2; r <= size_; ++r) {
    transfer(r, 1, inputs[static_cast<std::size_t>(r - 1)].bytes(), tag);
  }
  std::vector<int> order(static_cast<std::size_t>(size_));
  for (int r = 1; r <= size_; ++r) order[static_cast<std::size_t>(r - 1)] = r;
  tree_broadcast_time(order, out.bytes(), tag);
  return std::vector<Matrix>(inputs.size(), out);
}

std::vector<double> Communicator::all_gather_scalar(
    const std::vector<double>& values, CommTag tag) {
  std::vector<Matrix> in;
  in.reserve(values.size());
  for (double v : values) in.emplace_back(1, 1, v);
  const auto out = all_gather_concat(in, Axis::kCols, tag);
  return out[0].data();
}

double Communicator::all_reduce_mean(const std::vector<double>& values,
                                     CommTag tag) {
  std::vector<Matrix> in;
  in.reserve(values.size());
  for (double v : values) in.emplace_back(1, 1, v);
  const auto out = all_reduce_sum(in, tag);
  return out[0](0, 0) / static_cast<double>(size_);
}

double Communicator::all_reduce_min(const std::vector<double>& values,
                                    CommTag tag) {
  check_participation(values.size(), "all_reduce_min");
  const double m = *std::min_element(values.begin(), values.end());
  note(tag, CommPattern::kAllReduce, sizeof(double));
  std::vector<int> order(static_cast<std::size_t>(size_));
  for (int r = 1; r <= size_; ++r) order[static_cast<std::size_t>(r - 1)] = r;
  tree_reduce_time(order, sizeof(double), tag);
  tree_broadcast_time(order, sizeof(double), tag);
  return m;
}

std::vector<Matrix> Communicator::broadcast_tree(const Matrix& value, int root,
                                                 std::vector<int> participants,
                                                 CommTag tag) {
  const auto order = normalize(root, std::move(participants));
  std::vector<Matrix> out(static_cast<std::size_t>(size_));
  for (int r : order) out[static_cast<std::size_t>(r - 1)] = value;
  if (order.size() > 1) {
    note(tag, CommPattern::kBroadcast, value.bytes());
    tree_broadcast_time(order, value.bytes(), tag);
  }
  return out;
}

Matrix Communicator::reduce_to_root(const std::vector<Matrix>& inputs,
                                    int root, std::vector<int> participants,
                                    CommTag tag) {
  check_participation(inputs.size(), "reduce_to_root");
  const auto order = normalize(root, std::move(participants));
  const Matrix& first = inputs[static_cast<std::size_t>(root - 1)];
  Matrix total = first;
  for (std::size_t i = 1; i < order.size(); ++i) {
    const Matrix& m = inputs[static_cast<std::size_t>(order[i] - 1)];
    if (m.rows() != first.rows() || m.cols() != first.cols()) {
      throw CollectiveShapeError("reduce_to_root: rank " +
                                 std::to_string(order[i]) + " passed " +
                                 m.shape_string() + " but root passed " +
                                 first.shape_string());
    }
    total += m;
  }
  if (order.size() > 1) {
    note(tag, CommPattern::kReduce, total.bytes());
    tree_reduce_time(order, total.bytes(), tag);
  }
  return total;
}

std::vector<Matrix> Communicator::scatter_serial(const Matrix& value, int root,
                                                 std::vector<int> participants,
                                                 CommTag tag) {
  const auto order = normalize(root, std::move(participants));
  std::vector<Matrix> out(static_cast<std::size_t>(size_));
  for (int r : order) out[static_cast<std::size_t>(r - 1)] = value;
  if (order.size() > 1) {
    note(tag, CommPattern::kScatter, value.bytes());
    for (std::size_t i = 1; i < order.size(); ++i) {
      transfer(root, order[i], value.bytes(), tag);
    }
  }
  return out;
}

Matrix Communicator::gather_serial(const std::vector<Matrix>& inputs, int root,
                                   std::vector<int> participants,
                                   CommTag tag) {
  check_participation(inputs.size(), "gather_serial");
  const auto order = normalize(root, std::move(participants));
  const Matrix& first = inputs[static_cast<std::size_t>(root - 1)];
  Matrix total = first;
  for (std::size_t i = 1; i < order.size(); ++i) {
    const Matrix& m = inputs[static_cast<std::size_t>(order[i] - 1)];
    if (m.rows() != first.rows() || m.cols() != first.cols()) {
      throw CollectiveShapeError("gather_serial: rank " +
                                 std::to_string(order[i]) + " passed " +
                                 m.shape_string() + " but root passed " +
                                 first.shape_string());
    }
    total += m;
  }
  if (order.size() > 1) {
    note(tag, CommPattern::kGather, total.bytes());
    for (std::size_t i = 1; i < order.size(); ++i) {
      transfer(order[i], root, total.bytes(), tag);
      charge_reduction(root, total.size(), tag);
    }
  }
  return total;
}

}  // namespace tpflex
