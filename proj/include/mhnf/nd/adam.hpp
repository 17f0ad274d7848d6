// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mhnf/nd/dense_matrix.hpp"

namespace mhnf::nd {

struct AdamOptions {
  double lr = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.001;
};

/// Adam with decoupled weight decay: p ← p − lr·wd·p, then the usual
/// bias-corrected moment update.
class AdamState {
 public:
  AdamState() = default;
  explicit AdamState(AdamOptions options) : options_(options) {}

  /// Updates `params` in place. Moments are allocated on the first call and
  /// must keep matching the parameter shapes afterwards.
  void step(std::span<DenseMatrix* const> params, std::span<const DenseMatrix> grads);

  std::uint64_t steps() const { return step_; }
  const AdamOptions& options() const { return options_; }
  const std::vector<DenseMatrix>& first_moments() const { return m_; }
  const std::vector<DenseMatrix>& second_moments() const { return v_; }

 private:
  AdamOptions options_;
  std::uint64_t step_ = 0;
  std::vector<DenseMatrix> m_;
  std::vector<DenseMatrix> v_;
};

}  // namespace mhnf::nd
