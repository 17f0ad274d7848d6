// SPDX-License-Identifier: Apache-2.0
#include "mhnf/nd/tape.hpp"

#include <cmath>

#include "mhnf/error.hpp"

namespace mhnf::nd {

Var Tape::constant(DenseMatrix value) { return push(std::move(value), false, nullptr); }
Var Tape::parameter(DenseMatrix value) { return push(std::move(value), true, nullptr); }
SpVar Tape::constant(SparseMatrix value) { return push(std::move(value), false, nullptr); }
SpVar Tape::parameter(SparseMatrix value) { return push(std::move(value), true, nullptr); }

Var Tape::push(DenseMatrix value, bool requires_grad, BackwardFn fn) {
  if (!value.all_finite()) throw NumericError("tape: non-finite value at node " + std::to_string(nodes_.size()));
  Node n;
  n.leaf = !fn;
  n.requires_grad = requires_grad;
  n.backward = requires_grad ? std::move(fn) : nullptr;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

SpVar Tape::push(SparseMatrix value, bool requires_grad, BackwardFn fn) {
  for (double v : value.values()) {
    if (!std::isfinite(v)) throw NumericError("tape: non-finite sparse value at node " + std::to_string(nodes_.size()));
  }
  Node n;
  n.leaf = !fn;
  n.requires_grad = requires_grad;
  n.backward = requires_grad ? std::move(fn) : nullptr;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return SpVar{nodes_.size() - 1};
}

const DenseMatrix& Tape::value(Var v) const { return std::get<DenseMatrix>(nodes_.at(v.id).value); }
const SparseMatrix& Tape::value(SpVar v) const { return std::get<SparseMatrix>(nodes_.at(v.id).value); }

std::size_t Tape::value_size(const Node& n) const {
  if (const auto* d = std::get_if<DenseMatrix>(&n.value)) return d->size();
  return std::get<SparseMatrix>(n.value).nnz();
}

std::span<double> Tape::accumulator(std::size_t id) {
  Node& n = nodes_.at(id);
  if (!n.requires_grad) return {};
  if (n.grad.empty()) n.grad.assign(value_size(n), 0.0);
  return n.grad;
}

DenseMatrix Tape::grad(Var v) const {
  const Node& n = nodes_.at(v.id);
  const auto& val = std::get<DenseMatrix>(n.value);
  if (n.grad.empty()) return DenseMatrix(val.rows(), val.cols());
  return DenseMatrix(val.rows(), val.cols(), n.grad);
}

std::vector<double> Tape::grad(SpVar v) const {
  const Node& n = nodes_.at(v.id);
  if (n.grad.empty()) return std::vector<double>(std::get<SparseMatrix>(n.value).nnz(), 0.0);
  return n.grad;
}

void Tape::backward(Var loss) {
  if (consumed_) throw std::logic_error("Tape::backward called twice");
  const auto& lv = value(loss);
  if (lv.rows() != 1 || lv.cols() != 1) {
    throw ShapeError("backward: loss must be scalar, got " + lv.shape_str());
  }
  consumed_ = true;
  if (!nodes_[loss.id].requires_grad) return;
  accumulator(loss.id)[0] = 1.0;
  for (std::size_t id = loss.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.leaf) continue;
    // Interior gradients are released once pushed to the inputs.
    std::vector<double> upstream = std::move(n.grad);
    n.grad.clear();
    n.backward(*this, upstream);
  }
}

}  // namespace mhnf::nd
