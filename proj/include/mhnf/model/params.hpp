// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mhnf/nd/dense_matrix.hpp"
#include "mhnf/nd/tape.hpp"
#include "mhnf/rng.hpp"

namespace mhnf::model {

using nd::DenseMatrix;

/// Named, ordered collection of parameter tensors.
class ParamStore {
 public:
  /// Appends a tensor. Throws std::invalid_argument on a duplicate name.
  void add(const std::string& name, DenseMatrix value);
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  std::size_t index(const std::string& name) const;
  DenseMatrix& get(const std::string& name) { return values_[index(name)]; }
  const DenseMatrix& get(const std::string& name) const { return values_[index(name)]; }

  std::size_t size() const { return values_.size(); }
  const std::vector<std::string>& names() const { return names_; }
  std::vector<DenseMatrix>& values() { return values_; }
  const std::vector<DenseMatrix>& values() const { return values_; }
  std::size_t scalar_count() const;

  friend bool operator==(const ParamStore& a, const ParamStore& b) {
    return a.names_ == b.names_ && a.values_ == b.values_;
  }

 private:
  std::vector<std::string> names_;
  std::vector<DenseMatrix> values_;
  std::map<std::string, std::size_t> index_;
};

/// Tape handles for every tensor of a ParamStore, same order.
class ParamVars {
 public:
  /// Registers every tensor; names in `frozen` become constants.
  ParamVars(nd::Tape& t, const ParamStore& store, const std::vector<std::string>& frozen = {});
  nd::Var operator[](const std::string& name) const { return vars_[store_->index(name)]; }
  const std::vector<nd::Var>& all() const { return vars_; }

 private:
  const ParamStore* store_;
  std::vector<nd::Var> vars_;
};

/// uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
DenseMatrix glorot(Rng& rng, std::size_t fan_in, std::size_t fan_out);
DenseMatrix gaussian(Rng& rng, std::size_t rows, std::size_t cols, double stddev);

}  // namespace mhnf::model
