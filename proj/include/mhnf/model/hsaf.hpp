// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mhnf/nd/dense_matrix.hpp"
#include "mhnf/nd/tape.hpp"

namespace mhnf::model {

inline constexpr double kAttentionSlope = 0.01;

/// Column l holds leaky_relu(tanh(Z_l W_a) δ) per node: N x parts.size().
nd::Var attention_scores(nd::Tape& t, std::span<const nd::Var> parts, nd::Var wa, nd::Var delta);

struct Fusion {
  nd::Var fused;    // N x d
  nd::Var weights;  // N x parts, rows sum to 1
};

/// Per-node softmax of `scores` over parts and the weighted sum of parts.
Fusion fuse(nd::Tape& t, std::span<const nd::Var> parts, nd::Var scores);

/// Hop-level attention within one path.
Fusion hop_fuse(nd::Tape& t, std::span<const nd::Var> hops, nd::Var wa, nd::Var delta);
/// Path-level attention with parameters shared across paths.
Fusion path_fuse(nd::Tape& t, std::span<const nd::Var> paths, nd::Var wa, nd::Var delta);

/// Z W + b.
nd::Var classify(nd::Tape& t, nd::Var z, nd::Var w, nd::Var b);

/// Mean of each column over the given rows.
std::vector<double> column_means(const nd::DenseMatrix& m, std::span<const std::size_t> rows);

/// Optional runtime check of every fusion: weight rows sum to 1 and fused
/// rows stay inside the coordinatewise hull of their parts.
class AttentionAudit {
 public:
  static void enable(bool on) { enabled_.store(on); }
  static bool enabled() { return enabled_.load(); }
  static void reset();
  static std::uint64_t checks() { return checks_.load(); }
  static std::uint64_t failures() { return failures_.load(); }
  static std::string first_failure();

  /// Records one fusion; returns false on a violation.
  static bool check(const nd::DenseMatrix& weights, std::span<const nd::DenseMatrix> parts,
                    const nd::DenseMatrix& fused, double tol = 1e-9);

 private:
  static std::atomic<bool> enabled_;
  static std::atomic<std::uint64_t> checks_;
  static std::atomic<std::uint64_t> failures_;
};

}  // namespace mhnf::model
