// SPDX-License-Identifier: Apache-2.0
#include "mhnf/nd/adam.hpp"

#include <cmath>

#include "mhnf/error.hpp"

namespace mhnf::nd {

void AdamState::step(std::span<DenseMatrix* const> params, std::span<const DenseMatrix> grads) {
  if (params.size() != grads.size()) {
    throw ShapeError("adam_step: " + std::to_string(params.size()) + " params, " +
                     std::to_string(grads.size()) + " grads");
  }
  if (m_.empty()) {
    for (const DenseMatrix* p : params) {
      m_.emplace_back(p->rows(), p->cols());
      v_.emplace_back(p->rows(), p->cols());
    }
  }
  if (m_.size() != params.size()) throw ShapeError("adam_step: parameter count changed");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i]->same_shape(grads[i]) || !params[i]->same_shape(m_[i])) {
      throw ShapeError("adam_step: parameter " + std::to_string(i) + " " + params[i]->shape_str() +
                       " vs grad " + grads[i].shape_str());
    }
  }

  ++step_;
  const auto& o = options_;
  const double t = static_cast<double>(step_);
  const double bc1 = 1.0 - std::pow(o.beta1, t);
  const double bc2 = 1.0 - std::pow(o.beta2, t);
  const double decay = o.lr * o.weight_decay;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i]->values();
    auto g = grads[i].values();
    auto m = m_[i].values();
    auto v = v_[i].values();
    for (std::size_t k = 0; k < p.size(); ++k) {
      p[k] -= decay * p[k];
      m[k] = o.beta1 * m[k] + (1.0 - o.beta1) * g[k];
      v[k] = o.beta2 * v[k] + (1.0 - o.beta2) * g[k] * g[k];
      const double m_hat = m[k] / bc1;
      const double v_hat = v[k] / bc2;
      p[k] -= o.lr * m_hat / (std::sqrt(v_hat) + o.eps);
    }
  }
}

}  // namespace mhnf::nd
