// SPDX-License-Identifier: Apache-2.0
#include "mhnf/model/hmae.hpp"

#include <algorithm>
#include <cmath>

#include "mhnf/error.hpp"
#include "mhnf/nd/ops.hpp"

namespace mhnf::model {

PathMixerParams PathMixerParams::constant(std::size_t paths, std::size_t hops, std::size_t relations,
                                          double value) {
  PathMixerParams p{paths, hops, relations, {}};
  p.w.assign(paths * hops, std::vector<double>(relations, value));
  return p;
}

SparseMatrix mix_hop(const graph::HetGraph& g, std::span<const double> weights) {
  const auto mats = g.relation_matrices();
  return nd::masked_row_softmax(nd::weighted_sum_sparse(mats, weights));
}

SparseMatrix mix_hop(const nd::UnionPattern& relations, std::span<const double> weights) {
  return nd::masked_row_softmax(nd::weighted_sum_sparse(relations, weights));
}

std::vector<SparseMatrix> chain_hops(std::span<const SparseMatrix> mixes) {
  if (mixes.empty()) throw ShapeError("chain_hops: at least one hop is required");
  std::vector<SparseMatrix> out{mixes[0]};
  for (std::size_t l = 1; l < mixes.size(); ++l) out.push_back(nd::spspmm(out.back(), mixes[l]));
  return out;
}

HopAdjacency extract(const graph::HetGraph& g, const PathMixerParams& params) {
  if (params.relations != g.num_relations()) {
    throw ShapeError("extract: mixer has " + std::to_string(params.relations) + " relations, graph has " +
                     std::to_string(g.num_relations()));
  }
  const auto pattern = nd::union_pattern(g.relation_matrices());
  HopAdjacency out;
  for (std::size_t p = 0; p < params.paths; ++p) {
    std::vector<SparseMatrix> mixes;
    for (std::size_t l = 1; l <= params.hops; ++l) mixes.push_back(mix_hop(pattern, params.at(p, l)));
    out.chains.push_back(chain_hops(mixes));
    out.mixes.push_back(std::move(mixes));
  }
  return out;
}

nd::SpVar mix_hop(nd::Tape& t, const nd::UnionPattern& relations, nd::Var w) {
  return nd::masked_row_softmax(t, nd::weighted_sum_sparse(t, relations, w));
}

std::vector<nd::SpVar> chain_hops(nd::Tape& t, std::span<const nd::SpVar> mixes) {
  if (mixes.empty()) throw ShapeError("chain_hops: at least one hop is required");
  std::vector<nd::SpVar> out{mixes[0]};
  for (std::size_t l = 1; l < mixes.size(); ++l) out.push_back(nd::spspmm(t, out.back(), mixes[l]));
  return out;
}

std::vector<double> relation_softmax(std::span<const double> w) {
  std::vector<double> out(w.begin(), w.end());
  if (out.empty()) return out;
  const double mx = *std::max_element(out.begin(), out.end());
  double z = 0.0;
  for (double& v : out) z += (v = std::exp(v - mx));
  for (double& v : out) v /= z;
  return out;
}

PathSchema path_schema(const graph::HetGraph& g) {
  PathSchema s;
  for (const auto& r : g.relations) s.relations.push_back(r.spec);
  s.start_type = g.target_type;
  return s;
}

std::vector<std::vector<LearnedPath>> report_learned_paths(const PathMixerParams& params,
                                                           const std::vector<std::vector<double>>& hop_attention,
                                                           std::size_t top_k,
                                                           const std::optional<PathSchema>& schema) {
  if (hop_attention.size() != params.paths) throw ShapeError("report_learned_paths: one attention row per path");
  if (schema && schema->relations.size() != params.relations) {
    throw ShapeError("report_learned_paths: schema and mixer disagree on relation count");
  }
  const std::size_t m = params.relations, hops = params.hops;
  std::vector<std::vector<LearnedPath>> out;
  for (std::size_t p = 0; p < params.paths; ++p) {
    if (hop_attention[p].size() != hops + 1) throw ShapeError("report_learned_paths: expected L + 1 hop attentions");
    std::vector<std::vector<double>> soft;
    for (std::size_t l = 1; l <= hops; ++l) soft.push_back(relation_softmax(params.at(p, l)));

    std::vector<LearnedPath> all;
    std::vector<std::size_t> seq(hops, 0);
    while (true) {
      LearnedPath lp{p, seq, 1.0, hop_attention[p][hops], 0.0, true};
      for (std::size_t l = 0; l < hops; ++l) lp.mixer_factor *= soft[l][seq[l]];
      lp.score = lp.mixer_factor * lp.hop_attention;
      if (schema) {
        std::size_t at = schema->start_type;
        for (std::size_t r : seq) {
          if (schema->relations[r].src != at) {
            lp.feasible = false;
            break;
          }
          at = schema->relations[r].dst;
        }
      }
      all.push_back(std::move(lp));
      std::size_t k = hops;
      while (k > 0 && ++seq[k - 1] == m) seq[--k] = 0;
      if (k == 0) break;
    }
    std::stable_sort(all.begin(), all.end(), [](const LearnedPath& a, const LearnedPath& b) {
      if (a.feasible != b.feasible) return a.feasible;
      return a.score > b.score;
    });
    if (all.size() > top_k) all.resize(top_k);
    out.push_back(std::move(all));
  }
  return out;
}

std::string path_label(const LearnedPath& p, const std::vector<std::string>& relation_names) {
  std::string s;
  for (std::size_t k = 0; k < p.relations.size(); ++k) {
    if (k) s += " -> ";
    s += relation_names.at(p.relations[k]);
  }
  return s;
}

}  // namespace mhnf::model
