// SPDX-License-Identifier: Apache-2.0
#include "mhnf/model/hsaf.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>

#include "mhnf/error.hpp"
#include "mhnf/nd/ops.hpp"

namespace mhnf::model {

nd::Var attention_scores(nd::Tape& t, std::span<const nd::Var> parts, nd::Var wa, nd::Var delta) {
  if (parts.empty()) throw ShapeError("attention_scores: nothing to attend over");
  std::vector<nd::Var> cols;
  for (nd::Var z : parts) {
    auto hidden = nd::tanh_op(t, nd::matmul(t, z, wa));
    cols.push_back(nd::leaky_relu(t, nd::matmul(t, hidden, delta), kAttentionSlope));
  }
  return nd::concat_cols(t, cols);
}

Fusion fuse(nd::Tape& t, std::span<const nd::Var> parts, nd::Var scores) {
  auto weights = nd::row_softmax_dense(t, scores);
  auto fused = nd::weighted_row_sum(t, parts, weights);
  if (AttentionAudit::enabled()) {
    std::vector<nd::DenseMatrix> values;
    for (nd::Var p : parts) values.push_back(t.value(p));
    AttentionAudit::check(t.value(weights), values, t.value(fused));
  }
  return {fused, weights};
}

Fusion hop_fuse(nd::Tape& t, std::span<const nd::Var> hops, nd::Var wa, nd::Var delta) {
  return fuse(t, hops, attention_scores(t, hops, wa, delta));
}

Fusion path_fuse(nd::Tape& t, std::span<const nd::Var> paths, nd::Var wa, nd::Var delta) {
  return fuse(t, paths, attention_scores(t, paths, wa, delta));
}

nd::Var classify(nd::Tape& t, nd::Var z, nd::Var w, nd::Var b) {
  return nd::add_row_bias(t, nd::matmul(t, z, w), b);
}

std::vector<double> column_means(const nd::DenseMatrix& m, std::span<const std::size_t> rows) {
  std::vector<double> out(m.cols(), 0.0);
  if (rows.empty()) return out;
  for (std::size_t r : rows) {
    for (std::size_t c = 0; c < m.cols(); ++c) out[c] += m(r, c);
  }
  for (double& v : out) v /= static_cast<double>(rows.size());
  return out;
}

std::atomic<bool> AttentionAudit::enabled_{false};
std::atomic<std::uint64_t> AttentionAudit::checks_{0};
std::atomic<std::uint64_t> AttentionAudit::failures_{0};

namespace {
std::mutex g_failure_mutex;
std::string g_first_failure;
}  // namespace

void AttentionAudit::reset() {
  checks_ = 0;
  failures_ = 0;
  std::lock_guard lock(g_failure_mutex);
  g_first_failure.clear();
}

std::string AttentionAudit::first_failure() {
  std::lock_guard lock(g_failure_mutex);
  return g_first_failure;
}

bool AttentionAudit::check(const nd::DenseMatrix& weights, std::span<const nd::DenseMatrix> parts,
                           const nd::DenseMatrix& fused, double tol) {
  ++checks_;
  std::string problem;
  for (std::size_t i = 0; i < weights.rows() && problem.empty(); ++i) {
    double s = 0.0;
    for (double w : weights.row(i)) {
      if (w < 0.0) problem = "negative attention at row " + std::to_string(i);
      s += w;
    }
    if (std::abs(s - 1.0) > tol) problem = "attention row " + std::to_string(i) + " sums to " + std::to_string(s);
    for (std::size_t c = 0; c < fused.cols() && problem.empty(); ++c) {
      double lo = parts[0](i, c), hi = lo;
      for (const auto& p : parts) {
        lo = std::min(lo, p(i, c));
        hi = std::max(hi, p(i, c));
      }
      const double slack = tol * std::max(1.0, std::max(std::abs(lo), std::abs(hi)));
      if (fused(i, c) < lo - slack || fused(i, c) > hi + slack) {
        problem = "fused value outside hull at (" + std::to_string(i) + ", " + std::to_string(c) + ")";
      }
    }
  }
  if (problem.empty()) return true;
  if (failures_++ == 0) {
    std::lock_guard lock(g_failure_mutex);
    g_first_failure = problem;
  }
  return false;
}

}  // namespace mhnf::model
