// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "mhnf/nd/dense_matrix.hpp"

namespace mhnf::nd {

using Index = std::uint32_t;

struct Triplet {
  Index row;
  Index col;
  double value;
};

enum class Duplicates {
  kSum,        // values at the same (row, col) are added
  kKeepOne,    // one entry survives with the value 1.0 (edge-list ingestion)
};

/// Compressed sparse row matrix.
///
/// Invariants enforced at construction: row_ptr has rows+1 monotone entries
/// ending at nnz, columns strictly increase within a row and are < cols, and
/// no stored value is exactly zero.
class SparseMatrix {
 public:
  SparseMatrix() : row_ptr_(1, 0) {}
  /// Empty (no stored entries) rows x cols matrix.
  SparseMatrix(std::size_t rows, std::size_t cols);
  /// Validating constructor; explicit zeros are removed.
  SparseMatrix(std::size_t rows, std::size_t cols, std::vector<std::size_t> row_ptr,
               std::vector<Index> col_idx, std::vector<double> values);

  static SparseMatrix from_triplets(std::size_t rows, std::size_t cols,
                                    std::vector<Triplet> entries,
                                    Duplicates dup = Duplicates::kSum);
  /// Keeps entries with |value| > threshold.
  static SparseMatrix from_dense(const DenseMatrix& m, double threshold = 0.0);
  static SparseMatrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t nnz() const { return values_.size(); }

  std::span<const std::size_t> row_ptr() const { return row_ptr_; }
  std::span<const Index> col_idx() const { return col_idx_; }
  std::span<const double> values() const { return values_; }

  std::span<const Index> row_cols(std::size_t r) const {
    return {col_idx_.data() + row_ptr_[r], row_ptr_[r + 1] - row_ptr_[r]};
  }
  std::span<const double> row_values(std::size_t r) const {
    return {values_.data() + row_ptr_[r], row_ptr_[r + 1] - row_ptr_[r]};
  }

  /// Value at (r, c), zero when not stored. O(log row length).
  double at(std::size_t r, std::size_t c) const;
  /// Position of (r, c) in values(), or nnz() if not stored.
  std::size_t find(std::size_t r, std::size_t c) const;

  /// Same pattern, new values. Zeros in `values` are dropped from the result.
  SparseMatrix with_values(std::vector<double> values) const;
  SparseMatrix transpose() const;
  DenseMatrix to_dense() const;
  bool same_pattern(const SparseMatrix& other) const;

  friend bool operator==(const SparseMatrix&, const SparseMatrix&) = default;

 private:
  struct Trusted {};
  SparseMatrix(Trusted, std::size_t rows, std::size_t cols, std::vector<std::size_t> row_ptr,
               std::vector<Index> col_idx, std::vector<double> values);
  friend class SparseBuilder;

  void drop_zeros();

  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::size_t> row_ptr_;
  std::vector<Index> col_idx_;
  std::vector<double> values_;
};

/// Row-by-row assembly for kernels that already emit sorted, zero-free rows.
class SparseBuilder {
 public:
  SparseBuilder(std::size_t rows, std::size_t cols, std::size_t reserve = 0);
  void push(Index col, double value) {
    col_idx_.push_back(col);
    values_.push_back(value);
  }
  void end_row() { row_ptr_.push_back(values_.size()); }
  SparseMatrix finish() &&;

 private:
  std::size_t rows_;
  std::size_t cols_;
  std::vector<std::size_t> row_ptr_;
  std::vector<Index> col_idx_;
  std::vector<double> values_;
};

}  // namespace mhnf::nd
