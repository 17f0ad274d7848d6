// SPDX-License-Identifier: Apache-2.0
#include "mhnf/nd/sparse_matrix.hpp"

#include <algorithm>
#include <limits>

#include "mhnf/error.hpp"

namespace mhnf::nd {

namespace {

void check_index_range(std::size_t rows, std::size_t cols) {
  if (rows > std::numeric_limits<Index>::max() || cols > std::numeric_limits<Index>::max()) {
    throw ShapeError("SparseMatrix: dimension exceeds index type " + shape_str(rows, cols));
  }
}

}  // namespace

SparseMatrix::SparseMatrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), row_ptr_(rows + 1, 0) {
  check_index_range(rows, cols);
}

SparseMatrix::SparseMatrix(std::size_t rows, std::size_t cols, std::vector<std::size_t> row_ptr,
                           std::vector<Index> col_idx, std::vector<double> values)
    : rows_(rows),
      cols_(cols),
      row_ptr_(std::move(row_ptr)),
      col_idx_(std::move(col_idx)),
      values_(std::move(values)) {
  check_index_range(rows, cols);
  if (row_ptr_.size() != rows + 1) throw ShapeError("SparseMatrix: row_ptr must have rows+1 entries");
  if (col_idx_.size() != values_.size()) throw ShapeError("SparseMatrix: col_idx/values length differ");
  if (row_ptr_.front() != 0 || row_ptr_.back() != values_.size()) {
    throw ShapeError("SparseMatrix: row_ptr must start at 0 and end at nnz");
  }
  for (std::size_t r = 0; r < rows; ++r) {
    if (row_ptr_[r] > row_ptr_[r + 1]) throw ShapeError("SparseMatrix: row_ptr not monotone");
    for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) {
      if (col_idx_[k] >= cols) throw ShapeError("SparseMatrix: column index out of range");
      if (k > row_ptr_[r] && col_idx_[k] <= col_idx_[k - 1]) {
        throw ShapeError("SparseMatrix: columns not strictly increasing in row " + std::to_string(r));
      }
    }
  }
  drop_zeros();
}

SparseMatrix::SparseMatrix(Trusted, std::size_t rows, std::size_t cols,
                           std::vector<std::size_t> row_ptr, std::vector<Index> col_idx,
                           std::vector<double> values)
    : rows_(rows),
      cols_(cols),
      row_ptr_(std::move(row_ptr)),
      col_idx_(std::move(col_idx)),
      values_(std::move(values)) {}

void SparseMatrix::drop_zeros() {
  if (std::none_of(values_.begin(), values_.end(), [](double v) { return v == 0.0; })) return;
  std::size_t out = 0;
  std::size_t start = 0;
  for (std::size_t r = 0; r < rows_; ++r) {
    const std::size_t end = row_ptr_[r + 1];
    for (std::size_t k = start; k < end; ++k) {
      if (values_[k] != 0.0) {
        col_idx_[out] = col_idx_[k];
        values_[out] = values_[k];
        ++out;
      }
    }
    start = end;
    row_ptr_[r + 1] = out;
  }
  col_idx_.resize(out);
  values_.resize(out);
}

SparseMatrix SparseMatrix::from_triplets(std::size_t rows, std::size_t cols,
                                         std::vector<Triplet> entries, Duplicates dup) {
  check_index_range(rows, cols);
  for (const auto& t : entries) {
    if (t.row >= rows || t.col >= cols) {
      throw ShapeError("SparseMatrix::from_triplets: entry (" + std::to_string(t.row) + "," +
                       std::to_string(t.col) + ") outside " + shape_str(rows, cols));
    }
  }
  std::stable_sort(entries.begin(), entries.end(), [](const Triplet& a, const Triplet& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });
  std::vector<std::size_t> row_ptr(rows + 1, 0);
  std::vector<Index> col_idx;
  std::vector<double> values;
  col_idx.reserve(entries.size());
  values.reserve(entries.size());
  for (std::size_t k = 0; k < entries.size(); ++k) {
    const auto& t = entries[k];
    const bool repeat = k > 0 && entries[k - 1].row == t.row && entries[k - 1].col == t.col;
    if (repeat) {
      if (dup == Duplicates::kSum) values.back() += t.value;
      continue;
    }
    col_idx.push_back(t.col);
    values.push_back(dup == Duplicates::kKeepOne ? 1.0 : t.value);
    ++row_ptr[t.row + 1];
  }
  for (std::size_t r = 0; r < rows; ++r) row_ptr[r + 1] += row_ptr[r];
  SparseMatrix m(Trusted{}, rows, cols, std::move(row_ptr), std::move(col_idx), std::move(values));
  m.drop_zeros();
  return m;
}

SparseMatrix SparseMatrix::from_dense(const DenseMatrix& d, double threshold) {
  SparseBuilder b(d.rows(), d.cols());
  for (std::size_t r = 0; r < d.rows(); ++r) {
    for (std::size_t c = 0; c < d.cols(); ++c) {
      const double v = d(r, c);
      if (v != 0.0 && std::abs(v) > threshold) b.push(static_cast<Index>(c), v);
    }
    b.end_row();
  }
  return std::move(b).finish();
}

SparseMatrix SparseMatrix::identity(std::size_t n) {
  SparseBuilder b(n, n, n);
  for (std::size_t i = 0; i < n; ++i) {
    b.push(static_cast<Index>(i), 1.0);
    b.end_row();
  }
  return std::move(b).finish();
}

double SparseMatrix::at(std::size_t r, std::size_t c) const {
  const std::size_t k = find(r, c);
  return k == nnz() ? 0.0 : values_[k];
}

std::size_t SparseMatrix::find(std::size_t r, std::size_t c) const {
  const auto first = col_idx_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[r]);
  const auto last = col_idx_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[r + 1]);
  const auto it = std::lower_bound(first, last, static_cast<Index>(c));
  if (it == last || *it != c) return nnz();
  return static_cast<std::size_t>(it - col_idx_.begin());
}

SparseMatrix SparseMatrix::with_values(std::vector<double> values) const {
  if (values.size() != nnz()) throw ShapeError("SparseMatrix::with_values: length differs from nnz");
  SparseMatrix m(Trusted{}, rows_, cols_, row_ptr_, col_idx_, std::move(values));
  m.drop_zeros();
  return m;
}

SparseMatrix SparseMatrix::transpose() const {
  std::vector<std::size_t> row_ptr(cols_ + 1, 0);
  for (Index c : col_idx_) ++row_ptr[c + 1];
  for (std::size_t c = 0; c < cols_; ++c) row_ptr[c + 1] += row_ptr[c];
  std::vector<std::size_t> cursor(row_ptr.begin(), row_ptr.end() - 1);
  std::vector<Index> col_idx(nnz());
  std::vector<double> values(nnz());
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) {
      const std::size_t dst = cursor[col_idx_[k]]++;
      col_idx[dst] = static_cast<Index>(r);
      values[dst] = values_[k];
    }
  }
  return SparseMatrix(Trusted{}, cols_, rows_, std::move(row_ptr), std::move(col_idx),
                      std::move(values));
}

DenseMatrix SparseMatrix::to_dense() const {
  DenseMatrix d(rows_, cols_);
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) d(r, col_idx_[k]) = values_[k];
  }
  return d;
}

bool SparseMatrix::same_pattern(const SparseMatrix& other) const {
  return rows_ == other.rows_ && cols_ == other.cols_ && row_ptr_ == other.row_ptr_ &&
         col_idx_ == other.col_idx_;
}

SparseBuilder::SparseBuilder(std::size_t rows, std::size_t cols, std::size_t reserve)
    : rows_(rows), cols_(cols) {
  check_index_range(rows, cols);
  row_ptr_.reserve(rows + 1);
  row_ptr_.push_back(0);
  col_idx_.reserve(reserve);
  values_.reserve(reserve);
}

SparseMatrix SparseBuilder::finish() && {
  if (row_ptr_.size() != rows_ + 1) {
    throw ShapeError("SparseBuilder: " + std::to_string(row_ptr_.size() - 1) + " rows ended, expected " +
                     std::to_string(rows_));
  }
  SparseMatrix m(SparseMatrix::Trusted{}, rows_, cols_, std::move(row_ptr_), std::move(col_idx_),
                 std::move(values_));
  m.drop_zeros();
  return m;
}

}  // namespace mhnf::nd
