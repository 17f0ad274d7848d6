// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <variant>
#include <vector>

#include "mhnf/nd/dense_matrix.hpp"
#include "mhnf/nd/sparse_matrix.hpp"

namespace mhnf::nd {

inline constexpr std::size_t kNoNode = std::numeric_limits<std::size_t>::max();

/// Handle to a dense node on a Tape.
struct Var {
  std::size_t id = kNoNode;
};

/// Handle to a sparse node; only its values are differentiable, the pattern
/// is treated as structure.
struct SpVar {
  std::size_t id = kNoNode;
};

/// Reverse-mode record of one forward computation.
///
/// Nodes are appended in evaluation order, so every node's inputs precede it.
/// A tape is single-use: build, call backward() once, read gradients.
class Tape {
 public:
  /// Called with the gradient of the node's value, flattened like its values.
  using BackwardFn = std::function<void(Tape&, std::span<const double>)>;

  Var constant(DenseMatrix value);
  Var parameter(DenseMatrix value);
  SpVar constant(SparseMatrix value);
  SpVar parameter(SparseMatrix value);

  const DenseMatrix& value(Var v) const;
  const SparseMatrix& value(SpVar v) const;
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  bool requires_grad(SpVar v) const { return nodes_[v.id].requires_grad; }

  /// d loss / d node, shaped like the node's value (zeros if nothing flowed).
  DenseMatrix grad(Var v) const;
  std::vector<double> grad(SpVar v) const;

  /// Seeds d loss / d loss = 1 and propagates to every node requiring grad.
  /// Gradients of intermediate nodes are released once consumed.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }

  // Op-author interface.
  Var push(DenseMatrix value, bool requires_grad, BackwardFn fn);
  SpVar push(SparseMatrix value, bool requires_grad, BackwardFn fn);
  /// Gradient accumulator of node `id`; empty when it does not require grad.
  std::span<double> accumulator(std::size_t id);

 private:
  struct Node {
    std::variant<DenseMatrix, SparseMatrix> value;
    std::vector<double> grad;
    bool requires_grad = false;
    bool leaf = true;
    BackwardFn backward;
  };
  std::size_t value_size(const Node& n) const;

  std::vector<Node> nodes_;
  bool consumed_ = false;
};

}  // namespace mhnf::nd
