// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mhnf/nd/dense_matrix.hpp"
#include "mhnf/nd/sparse_matrix.hpp"

// Value-level kernels. All reductions run in a fixed sequential order so the
// same inputs give bitwise-identical outputs.
namespace mhnf::nd {

/// Entries of a sparse product with magnitude at or below this are dropped.
inline constexpr double kPruneThreshold = 1e-12;

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);
/// aᵀ · b
DenseMatrix matmul_tn(const DenseMatrix& a, const DenseMatrix& b);
/// a · bᵀ
DenseMatrix matmul_nt(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix transpose(const DenseMatrix& a);

DenseMatrix spmm(const SparseMatrix& a, const DenseMatrix& b);
/// aᵀ · b without materializing the transpose.
DenseMatrix spmm_tn(const SparseMatrix& a, const DenseMatrix& b);
SparseMatrix spspmm(const SparseMatrix& a, const SparseMatrix& b,
                    double threshold = kPruneThreshold);

/// Union sparsity pattern of same-shaped matrices, with the position of every
/// input entry inside the union. Relation sets are fixed per graph, so this is
/// computed once and reused by every weighted sum over them.
struct UnionPattern {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::size_t> row_ptr;
  std::vector<Index> col_idx;
  /// positions[m][k]: slot of mats[m].values()[k] in the union.
  std::vector<std::vector<std::size_t>> positions;
  /// values[m][k] copied from mats[m].
  std::vector<std::vector<double>> values;

  std::size_t nnz() const { return col_idx.size(); }
  std::size_t num_inputs() const { return positions.size(); }
};

UnionPattern union_pattern(std::span<const SparseMatrix> mats);

/// Σ_m w_m · mats[m] over the union pattern; exact zeros are dropped.
SparseMatrix weighted_sum_sparse(std::span<const SparseMatrix> mats, std::span<const double> w);
SparseMatrix weighted_sum_sparse(const UnionPattern& pattern, std::span<const double> w);

/// Softmax over the stored entries of each row; empty rows stay empty.
SparseMatrix masked_row_softmax(const SparseMatrix& a);
/// Row i divided by its row sum; rows with zero sum are left empty.
SparseMatrix normalize_rows(const SparseMatrix& a);
std::vector<double> row_sums(const SparseMatrix& a);

DenseMatrix relu(const DenseMatrix& a);
DenseMatrix leaky_relu(const DenseMatrix& a, double slope);
DenseMatrix tanh_op(const DenseMatrix& a);
DenseMatrix exp_op(const DenseMatrix& a);
/// Natural log; inputs must be positive.
DenseMatrix log_op(const DenseMatrix& a);
DenseMatrix row_softmax_dense(const DenseMatrix& a);

/// Mean over `rows` of -log softmax(logits[row])[labels[row]].
/// `labels` is indexed by row of `logits`.
double cross_entropy(const DenseMatrix& logits, std::span<const int> labels,
                     std::span<const std::size_t> rows);

}  // namespace mhnf::nd
