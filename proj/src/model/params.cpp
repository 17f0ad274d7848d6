// SPDX-License-Identifier: Apache-2.0
#include "mhnf/model/params.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mhnf::model {

void ParamStore::add(const std::string& name, DenseMatrix value) {
  if (contains(name)) throw std::invalid_argument("duplicate parameter '" + name + "'");
  index_[name] = values_.size();
  names_.push_back(name);
  values_.push_back(std::move(value));
}

std::size_t ParamStore::index(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
  return it->second;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& v : values_) n += v.size();
  return n;
}

ParamVars::ParamVars(nd::Tape& t, const ParamStore& store, const std::vector<std::string>& frozen)
    : store_(&store) {
  for (std::size_t k = 0; k < store.size(); ++k) {
    const bool fixed = std::find(frozen.begin(), frozen.end(), store.names()[k]) != frozen.end();
    vars_.push_back(fixed ? t.constant(store.values()[k]) : t.parameter(store.values()[k]));
  }
}

DenseMatrix glorot(Rng& rng, std::size_t fan_in, std::size_t fan_out) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  DenseMatrix m(fan_in, fan_out);
  for (double& v : m.values()) v = rng.uniform(-a, a);
  return m;
}

DenseMatrix gaussian(Rng& rng, std::size_t rows, std::size_t cols, double stddev) {
  DenseMatrix m(rows, cols);
  for (double& v : m.values()) v = rng.normal(0.0, stddev);
  return m;
}

}  // namespace mhnf::model
