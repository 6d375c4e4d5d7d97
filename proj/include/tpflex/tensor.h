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
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace tpflex {

// Dense row-major matrix of doubles. Batch dimensions of [bs, sql, h] tensors
// are flattened into rows, so every tensor in the simulator is 2D.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  std::size_t bytes() const { return data_.size() * sizeof(double); }

  double& operator()(std::size_t r, std::size_t c) {
    return data_[r * cols_ + c];
  }
  double operator()(std::size_t r, std::size_t c) const {
    return data_[r * cols_ + c];
  }

  std::span<double> row(std::size_t r) {
    return {data_.data() + r * cols_, cols_};
  }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  // Copies rows [begin, end).
  Matrix row_block(std::size_t begin, std::size_t end) const;
  // Copies columns [begin, end).
  Matrix col_block(std::size_t begin, std::size_t end) const;
  void set_row_block(std::size_t begin, const Matrix& block);
  void set_col_block(std::size_t begin, const Matrix& block);

  Matrix transpose() const;

  Matrix& operator+=(const Matrix& other);
  Matrix& operator-=(const Matrix& other);
  Matrix& operator*=(double s);

  bool operator==(const Matrix& other) const = default;

  std::string shape_string() const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);

double max_abs_diff(const Matrix& a, const Matrix& b);
double max_abs(const Matrix& a);

// Ascending set of 1-based column indices.
class IndexSet {
 public:
  IndexSet() = default;
  // Sorts and validates; duplicates or indices < 1 raise IndexError.
  explicit IndexSet(std::vector<std::size_t> indices);
  IndexSet(std::initializer_list<std::size_t> indices);

  const std::vector<std::size_t>& indices() const { return indices_; }
  std::size_t size() const { return indices_.size(); }
  bool empty() const { return indices_.empty(); }
  bool contains(std::size_t index) const;
  // Largest index, or 0 for the empty set.
  std::size_t max_index() const {
    return indices_.empty() ? 0 : indices_.back();
  }

  // Throws IndexError when any index exceeds `cols`.
  void check_range(std::size_t cols) const;
  // 1-based indices in [1, cols] that are not in the set.
  std::vector<std::size_t> complement(std::size_t cols) const;

  bool operator==(const IndexSet& other) const = default;
  std::string to_string() const;

 private:
  std::vector<std::size_t> indices_;
};

// Scalar multiply-add accounting. flops counts 2 per multiply-add pair.
struct WorkCounter {
  std::uint64_t flops = 0;
  std::uint64_t bytes_moved = 0;
  std::uint64_t matmuls = 0;
};

// C = A * B.
Matrix matmul(const Matrix& a, const Matrix& b, WorkCounter& acc);
// C = A * B^T. Preferred for X * W^T where W is stored [d_out x d_in].
Matrix matmul_nt(const Matrix& a, const Matrix& b, WorkCounter& acc);
// C = A^T * B.
Matrix matmul_tn(const Matrix& a, const Matrix& b, WorkCounter& acc);

std::uint64_t matmul_flops(std::size_t m, std::size_t k, std::size_t n);

Matrix prune_columns(const Matrix& m, const IndexSet& pruned);

enum class ImputationPolicy { kZero, kAverage, kSame };

std::string to_string(ImputationPolicy policy);
ImputationPolicy parse_imputation_policy(const std::string& name);

// Restores a pruned matrix to `cols` columns; positions in `pruned` are filled
// according to `policy`. `prev` is required for kSame and must be rows x cols.
Matrix impute_columns(const Matrix& m, const IndexSet& pruned, std::size_t cols,
                      ImputationPolicy policy, const Matrix* prev = nullptr);

// Mean absolute change per column: (1/R) * sum_j |new[j,i] - old[j,i]|.
std::vector<double> column_delta(const Matrix& w_new, const Matrix& w_old);

}  // namespace tpflex
