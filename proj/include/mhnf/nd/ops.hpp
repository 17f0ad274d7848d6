// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

#include "mhnf/nd/kernels.hpp"
#include "mhnf/nd/tape.hpp"

// Tape-recording counterparts of the kernels. Each op computes its value with
// the matching kernel and records the vector-Jacobian product for backward.
namespace mhnf::nd {

Var matmul(Tape& t, Var a, Var b);
Var add(Tape& t, Var a, Var b);
/// a + bias broadcast over rows; bias is 1 x a.cols().
Var add_row_bias(Tape& t, Var a, Var bias);
Var scale(Tape& t, Var a, double factor);
Var relu(Tape& t, Var a);
Var leaky_relu(Tape& t, Var a, double slope);
Var tanh_op(Tape& t, Var a);
Var exp_op(Tape& t, Var a);
Var log_op(Tape& t, Var a);
Var row_softmax_dense(Tape& t, Var a);
/// Sum of all entries as a 1x1 node.
Var sum(Tape& t, Var a);

/// Stack blocks vertically (equal column counts).
Var concat_rows(Tape& t, std::span<const Var> blocks);
/// Place column vectors / blocks side by side (equal row counts).
Var concat_cols(Tape& t, std::span<const Var> blocks);
/// Σ_l weights[:, l] ⊙ parts[l], each part N x d, weights N x parts.size().
Var weighted_row_sum(Tape& t, std::span<const Var> parts, Var weights);

Var spmm(Tape& t, SpVar a, Var b);
SpVar spspmm(Tape& t, SpVar a, SpVar b, double threshold = kPruneThreshold);
/// Σ_m w_m · mats[m] with w a |M| x 1 node; the matrices themselves are constant.
SpVar weighted_sum_sparse(Tape& t, const UnionPattern& pattern, Var w);
SpVar masked_row_softmax(Tape& t, SpVar a);
/// D⁻¹A with D the row sums of A (zero rows stay empty).
SpVar normalize_rows(Tape& t, SpVar a);

/// Mean cross-entropy over `rows`; labels indexed by row of `logits`.
Var cross_entropy(Tape& t, Var logits, std::span<const int> labels,
                  std::span<const std::size_t> rows);

}  // namespace mhnf::nd
