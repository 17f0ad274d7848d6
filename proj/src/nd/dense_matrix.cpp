// SPDX-License-Identifier: Apache-2.0
#include "mhnf/nd/dense_matrix.hpp"

#include <cmath>

#include "mhnf/error.hpp"

namespace mhnf::nd {

std::string shape_str(std::size_t rows, std::size_t cols) {
  return "(" + std::to_string(rows) + "x" + std::to_string(cols) + ")";
}

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), values_(rows * cols, fill) {}

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (values_.size() != rows * cols) {
    throw ShapeError("DenseMatrix: " + std::to_string(values_.size()) +
                     " values do not fill shape " + nd::shape_str(rows, cols));
  }
}

DenseMatrix DenseMatrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> v;
  v.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("DenseMatrix::from_rows: ragged rows");
    v.insert(v.end(), row.begin(), row.end());
  }
  return DenseMatrix(r, c, std::move(v));
}

DenseMatrix DenseMatrix::identity(std::size_t n) {
  DenseMatrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

DenseMatrix DenseMatrix::column(std::span<const double> values) {
  return DenseMatrix(values.size(), 1, std::vector<double>(values.begin(), values.end()));
}

bool DenseMatrix::all_finite() const {
  for (double v : values_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::string DenseMatrix::shape_str() const { return nd::shape_str(rows_, cols_); }

}  // namespace mhnf::nd
