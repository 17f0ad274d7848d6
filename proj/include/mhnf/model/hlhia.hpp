// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

#include "mhnf/graph/hetgraph.hpp"
#include "mhnf/model/params.hpp"
#include "mhnf/nd/tape.hpp"

namespace mhnf::model {

/// Per-type inputs to the shared projection: featured types carry a
/// projection matrix (in_dim x d), featureless types an embedding table
/// (count x d). Exactly one of the two is set per type.
struct ProjectionVars {
  std::vector<nd::Var> projection;
  std::vector<nd::Var> embedding;
};

/// Stacks M_τ h_τ (or the embedding table) for every type into N x d.
nd::Var project(nd::Tape& t, const graph::HetGraph& g, const ProjectionVars& params);

/// relu(D⁻¹ A h' W).
nd::Var aggregate_hop(nd::Tape& t, nd::SpVar a, nd::Var h, nd::Var w);

/// Z_0 = relu(h' W), Z_l = relu(D_l⁻¹ A_l h' W) for l = 1..L; h' W is shared.
std::vector<nd::Var> aggregate_all(nd::Tape& t, std::span<const nd::SpVar> chain, nd::Var h, nd::Var w);

}  // namespace mhnf::model
