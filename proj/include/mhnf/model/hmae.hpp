// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mhnf/graph/hetgraph.hpp"
#include "mhnf/nd/kernels.hpp"
#include "mhnf/nd/tape.hpp"

// Hybrid metapath extraction: per-hop soft relation mixtures and their chains.
namespace mhnf::model {

using nd::SparseMatrix;

/// Raw mixing weights w^{p,l}, one vector of length |M| per (path, hop).
struct PathMixerParams {
  std::size_t paths = 0, hops = 0, relations = 0;
  std::vector<std::vector<double>> w;  // index p * hops + (l - 1)

  static PathMixerParams constant(std::size_t paths, std::size_t hops, std::size_t relations, double value);
  std::vector<double>& at(std::size_t p, std::size_t l) { return w.at(p * hops + l - 1); }
  const std::vector<double>& at(std::size_t p, std::size_t l) const { return w.at(p * hops + l - 1); }
};

/// Chains A_(1..L) and the one-hop mixtures they were built from, per path.
struct HopAdjacency {
  std::vector<std::vector<SparseMatrix>> chains;
  std::vector<std::vector<SparseMatrix>> mixes;
};

/// masked_row_softmax(Σ_m w_m A_m).
SparseMatrix mix_hop(const graph::HetGraph& g, std::span<const double> weights);
SparseMatrix mix_hop(const nd::UnionPattern& relations, std::span<const double> weights);
/// Prefix products mixes[0] · ... · mixes[l-1] for l = 1..L.
std::vector<SparseMatrix> chain_hops(std::span<const SparseMatrix> mixes);
HopAdjacency extract(const graph::HetGraph& g, const PathMixerParams& params);

// Tape-recorded counterparts; w is an |M| x 1 node.
nd::SpVar mix_hop(nd::Tape& t, const nd::UnionPattern& relations, nd::Var w);
std::vector<nd::SpVar> chain_hops(nd::Tape& t, std::span<const nd::SpVar> mixes);

/// Softmax of a raw weight vector; the normalized view used in reports.
std::vector<double> relation_softmax(std::span<const double> w);

/// Relation types used to flag type-feasible sequences.
struct PathSchema {
  std::vector<graph::RelationSpec> relations;
  std::size_t start_type = 0;
};
PathSchema path_schema(const graph::HetGraph& g);

struct LearnedPath {
  std::size_t path = 0;
  std::vector<std::size_t> relations;  // one relation index per hop
  double mixer_factor = 0.0;           // Π_l softmax(w^{p,l})[r_l]
  double hop_attention = 0.0;          // mean attention of the last hop
  double score = 0.0;                  // mixer_factor * hop_attention
  bool feasible = true;                // types chain from the start type
};

/// Ranks the |M|^L relation sequences of every path. `hop_attention[p]` is the
/// node-mean hop attention of path p over hops 0..L. Feasible sequences rank
/// before infeasible ones, then by score, then lexicographically.
std::vector<std::vector<LearnedPath>> report_learned_paths(const PathMixerParams& params,
                                                           const std::vector<std::vector<double>>& hop_attention,
                                                           std::size_t top_k,
                                                           const std::optional<PathSchema>& schema = std::nullopt);

std::string path_label(const LearnedPath& p, const std::vector<std::string>& relation_names);

}  // namespace mhnf::model
