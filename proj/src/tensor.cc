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

#include "tpflex/tensor.h"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "tpflex/error.h"

namespace tpflex {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw ShapeError("matrix data length " + std::to_string(data_.size()) +
                     " does not match shape " + shape_string());
  }
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) {
      throw ShapeError("ragged matrix literal");
    }
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    m(i, i) = 1.0;
  }
  return m;
}

Matrix Matrix::row_block(std::size_t begin, std::size_t end) const {
  if (begin > end || end > rows_) {
    throw IndexError("row block [" + std::to_string(begin) + ", " +
                     std::to_string(end) + ") outside " + shape_string());
  }
  Matrix out(end - begin, cols_);
  std::copy(data_.begin() + begin * cols_, data_.begin() + end * cols_,
            out.data_.begin());
  return out;
}

Matrix Matrix::col_block(std::size_t begin, std::size_t end) const {
  if (begin > end || end > cols_) {
    throw IndexError("column block [" + std::to_string(begin) + ", " +
                     std::to_string(end) + ") outside " + shape_string());
  }
  Matrix out(rows_, end - begin);
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::size_t c = begin; c < end; ++c) {
      out(r, c - begin) = (*this)(r, c);
    }
  }
  return out;
}

void Matrix::set_row_block(std::size_t begin, const Matrix& block) {
  if (block.cols_ != cols_ || begin + block.rows_ > rows_) {
    throw ShapeError("row block " + block.shape_string() + " at row " +
                     std::to_string(begin) + " does not fit " + shape_string());
  }
  std::copy(block.data_.begin(), block.data_.end(),
            data_.begin() + begin * cols_);
}

void Matrix::set_col_block(std::size_t begin, const Matrix& block) {
  if (block.rows_ != rows_ || begin + block.cols_ > cols_) {
    throw ShapeError("column block " + block.shape_string() + " at column " +
                     std::to_string(begin) + " does not fit " + shape_string());
  }
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::size_t c = 0; c < block.cols_; ++c) {
      (*this)(r, begin + c) = block(r, c);
    }
  }
}

Matrix Matrix::transpose() const {
  Matrix out(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::size_t c = 0; c < cols_; ++c) {
      out(c, r) = (*this)(r, c);
    }
  }
  return out;
}

Matrix& Matrix::operator+=(const Matrix& other) {
  if (other.rows_ != rows_ || other.cols_ != cols_) {
    throw ShapeError("cannot add " + other.shape_string() + " to " +
                     shape_string());
  }
  for (std::size_t i = 0; i < data_.size(); ++i) {
    data_[i] += other.data_[i];
  }
  return *this;
}

Matrix& Matrix::operator-=(const Matrix& other) {
  if (other.rows_ != rows_ || other.cols_ != cols_) {
    throw ShapeError("cannot subtract " + other.shape_string() + " from " +
                     shape_string());
  }
  for (std::size_t i = 0; i < data_.size(); ++i) {
    data_[i] -= other.data_[i];
  }
  return *this;
}

Matrix& Matrix::operator*=(double s) {
  for (double& v : data_) {
    v *= s;
  }
  return *this;
}

std::string Matrix::shape_string() const {
  return "[" + std::to_string(rows_) + "x" + std::to_string(cols_) + "]";
}

Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }

double max_abs_diff(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError("max_abs_diff shapes " + a.shape_string() + " vs " +
                     b.shape_string());
  }
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  }
  return m;
}

double max_abs(const Matrix& a) {
  double m = 0.0;
  for (double v : a.data()) {
    m = std::max(m, std::abs(v));
  }
  return m;
}

IndexSet::IndexSet(std::vector<std::size_t> indices)
    : indices_(std::move(indices)) {
  std::sort(indices_.begin(), indices_.end());
  if (!indices_.empty() && indices_.front() == 0) {
    throw IndexError("column indices are 1-based; got 0");
  }
  if (std::adjacent_find(indices_.begin(), indices_.end()) != indices_.end()) {
    throw IndexError("duplicate column index in " + to_string());
  }
}

IndexSet::IndexSet(std::initializer_list<std::size_t> indices)
    : IndexSet(std::vector<std::size_t>(indices)) {}

bool IndexSet::contains(std::size_t index) const {
  return std::binary_search(indices_.begin(), indices_.end(), index);
}

void IndexSet::check_range(std::size_t cols) const {
  if (max_index() > cols) {
    throw IndexError("column index " + std::to_string(max_index()) +
                     " outside [1, " + std::to_string(cols) + "]");
  }
}

std::vector<std::size_t> IndexSet::complement(std::size_t cols) const {
  std::vector<std::size_t> keep;
  keep.reserve(cols - std::min(cols, indices_.size()));
  std::size_t next = 0;
  for (std::size_t c = 1; c <= cols; ++c) {
    if (next < indices_.size() && indices_[next] == c) {
      ++next;
    } else {
      keep.push_back(c);
    }
  }
  return keep;
}

std::string IndexSet::to_string() const {
  std::ostringstream os;
  os << "{";
  for (std::size_t i = 0; i < indices_.size(); ++i) {
    os << (i ? "," : "") << indices_[i];
  }
  os << "}";
  return os.str();
}

std::uint64_t matmul_flops(std::size_t m, std::size_t k, std::size_t n) {
  return 2ull * m * k * n;
}

Matrix matmul(const Matrix& a, const Matrix& b, WorkCounter& acc) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul shape mismatch: " + a.shape_string() + " x " +
                     b.shape_string());
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Matrix c(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a(i, p);
      for (std::size_t j = 0; j < n; ++j) {
        c(i, j) += av * b(p, j);
      }
    }
  }
  acc.flops += matmul_flops(m, k, n);
  ++acc.matmuls;
  return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b, WorkCounter& acc) {
  if (a.cols() != b.cols()) {
    throw ShapeError("matmul shape mismatch: " + a.shape_string() + " x " +
                     b.shape_string() + "^T");
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  Matrix c(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    const auto ar = a.row(i);
    for (std::size_t j = 0; j < n; ++j) {
      const auto br = b.row(j);
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) {
        s += ar[p] * br[p];
      }
      c(i, j) = s;
    }
  }
  acc.flops += matmul_flops(m, k, n);
  ++acc.matmuls;
  return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b, WorkCounter& acc) {
  if (a.rows() != b.rows()) {
    throw ShapeError("matmul shape mismatch: " + a.shape_string() + "^T x " +
                     b.shape_string());
  }
  const std::size_t m = a.cols(), k = a.rows(), n = b.cols();
  Matrix c(m, n);
  for (std::size_t p = 0; p < k; ++p) {
    for (std::size_t i = 0; i < m; ++i) {
      const double av = a(p, i);
      for (std::size_t j = 0; j < n; ++j) {
        c(i, j) += av * b(p, j);
      }
    }
  }
  acc.flops += matmul_flops(m, k, n);
  ++acc.matmuls;
  return c;
}

Matrix prune_columns(const Matrix& m, const IndexSet& pruned) {
  pruned.check_range(m.cols());
  if (pruned.size() >= m.cols()) {
    throw DegeneratePruneError("pruning " + std::to_string(pruned.size()) +
                               " of " + std::to_string(m.cols()) +
                               " columns leaves nothing");
  }
  if (pruned.empty()) {
    return m;
  }
  const auto keep = pruned.complement(m.cols());
  Matrix out(m.rows(), keep.size());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t j = 0; j < keep.size(); ++j) {
      out(r, j) = m(r, keep[j] - 1);
    }
  }
  return out;
}

std::string to_string(ImputationPolicy policy) {
  switch (policy) {
    case ImputationPolicy::kZero:
      return "zero";
    case ImputationPolicy::kAverage:
      return "average";
    case ImputationPolicy::kSame:
      return "same";
  }
  return "unknown";
}

ImputationPolicy parse_imputation_policy(const std::string& name) {
  if (name == "zero") return ImputationPolicy::kZero;
  if (name == "average") return ImputationPolicy::kAverage;
  if (name == "same") return ImputationPolicy::kSame;
  throw ConfigError("unknown imputation policy '" + name + "'");
}

Matrix impute_columns(const Matrix& m, const IndexSet& pruned, std::size_t cols,
                      ImputationPolicy policy, const Matrix* prev) {
  pruned.check_range(cols);
  if (m.cols() + pruned.size() != cols) {
    throw ShapeError("imputing " + m.shape_string() + " with " +
                     std::to_string(pruned.size()) + " pruned columns into " +
                     std::to_string(cols) + " columns");
  }
  if (pruned.empty()) {
    return m;
  }
  if (policy == ImputationPolicy::kSame) {
    if (prev == nullptr) {
      throw MissingHistoryError("Same imputation requires a previous matrix");
    }
    if (prev->rows() != m.rows() || prev->cols() != cols) {
      throw ShapeError("Same imputation history " + prev->shape_string() +
                       " does not match target [" + std::to_string(m.rows()) +
                       "x" + std::to_string(cols) + "]");
    }
  }
  const auto keep = pruned.complement(cols);
  Matrix out(m.rows(), cols);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    double fill = 0.0;
    if (policy == ImputationPolicy::kAverage) {
      double s = 0.0;
      for (std::size_t j = 0; j < m.cols(); ++j) {
        s += m(r, j);
      }
      fill = s / static_cast<double>(m.cols());
    }
    for (std::size_t j = 0; j < keep.size(); ++j) {
      out(r, keep[j] - 1) = m(r, j);
    }
    for (std::size_t idx : pruned.indices()) {
      out(r, idx - 1) =
          policy == ImputationPolicy::kSame ? (*prev)(r, idx - 1) : fill;
    }
  }
  return out;
}

std::vector<double> column_delta(const Matrix& w_new, const Matrix& w_old) {
  if (w_new.rows() != w_old.rows() || w_new.cols() != w_old.cols()) {
    throw ShapeError("column_delta shapes " + w_new.shape_string() + " vs " +
                     w_old.shape_string());
  }
  std::vector<double> delta(w_new.cols(), 0.0);
  for (std::size_t r = 0; r < w_new.rows(); ++r) {
    for (std::size_t c = 0; c < w_new.cols(); ++c) {
      delta[c] += std::abs(w_new(r, c) - w_old(r, c));
    }
  }
  for (double& d : delta) {
    d /= static_cast<double>(w_new.rows());
  }
  return delta;
}

}  // namespace tpflex
