// SPDX-License-Identifier: Apache-2.0
#include "mhnf/model/hlhia.hpp"

#include "mhnf/error.hpp"
#include "mhnf/nd/ops.hpp"

namespace mhnf::model {

nd::Var project(nd::Tape& t, const graph::HetGraph& g, const ProjectionVars& params) {
  const std::size_t k = g.types.size();
  if (params.projection.size() != k || params.embedding.size() != k) {
    throw ShapeError("project: expected parameters for " + std::to_string(k) + " node types");
  }
  std::vector<nd::Var> blocks;
  for (std::size_t type = 0; type < k; ++type) {
    const auto& name = g.types[type].name;
    if (g.features[type]) {
      const auto& x = *g.features[type];
      const auto& m = t.value(params.projection[type]);
      if (m.rows() != x.cols()) {
        throw ShapeError("project: type " + name + " has feature width " + std::to_string(x.cols()) +
                         " but projection " + m.shape_str());
      }
      blocks.push_back(nd::matmul(t, t.constant(x), params.projection[type]));
    } else {
      const auto& e = t.value(params.embedding[type]);
      if (e.rows() != g.types[type].count) {
        throw ShapeError("project: embedding of type " + name + " is " + e.shape_str());
      }
      blocks.push_back(params.embedding[type]);
    }
  }
  return nd::concat_rows(t, blocks);
}

nd::Var aggregate_hop(nd::Tape& t, nd::SpVar a, nd::Var h, nd::Var w) {
  return nd::relu(t, nd::spmm(t, nd::normalize_rows(t, a), nd::matmul(t, h, w)));
}

std::vector<nd::Var> aggregate_all(nd::Tape& t, std::span<const nd::SpVar> chain, nd::Var h, nd::Var w) {
  const nd::Var hw = nd::matmul(t, h, w);
  std::vector<nd::Var> z{nd::relu(t, hw)};
  for (nd::SpVar a : chain) z.push_back(nd::relu(t, nd::spmm(t, nd::normalize_rows(t, a), hw)));
  return z;
}

}  // namespace mhnf::model
