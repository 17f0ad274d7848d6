// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include "doctest.h"
#include "mhnf/error.hpp"
#include "mhnf/model/hmae.hpp"
#include "mhnf/nd/ops.hpp"
#include "support/oracles.hpp"

using namespace mhnf;
using namespace mhnf::model;
using nd::DenseMatrix;
using nd::SparseMatrix;
using mhnf::testing::densify;
using mhnf::testing::max_abs_diff;
using mhnf::testing::random_sparse_dense;
using mhnf::testing::to_csr;

namespace {

graph::HetGraph acm_toy() {
  graph::NodeTypeTable types;
  types.add("P", 4);
  types.add("A", 3);
  types.add("S", 2);
  std::vector<graph::EdgeList> edges{
      {{"PA", 0, 1}, {{0, 0}, {0, 1}, {1, 1}, {2, 2}, {3, 0}}, "PA"},
      {{"PS", 0, 2}, {{0, 0}, {1, 0}, {2, 1}, {3, 1}}, "PS"},
  };
  return graph::build_graph(types, edges, {}, 0, {{0, 0}, {1, 1}});
}

// Σ over every walk i = j0 -> j1 -> ... -> jL = j of Π_l mixes[l](j_{l-1}, j_l).
DenseMatrix enumerate_walks(const std::vector<DenseMatrix>& mixes) {
  const std::size_t n = mixes[0].rows();
  DenseMatrix out(n, n);
  std::vector<std::size_t> walk(mixes.size() + 1);
  auto recurse = [&](auto&& self, std::size_t depth, double weight) -> void {
    if (weight == 0.0) return;
    if (depth == mixes.size()) {
      out(walk[0], walk[depth]) += weight;
      return;
    }
    for (std::size_t j = 0; j < n; ++j) {
      walk[depth + 1] = j;
      self(self, depth + 1, weight * mixes[depth](walk[depth], j));
    }
  };
  for (std::size_t i = 0; i < n; ++i) {
    walk[0] = i;
    recurse(recurse, 0, 1.0);
  }
  return out;
}

DenseMatrix dense_mix(const std::vector<DenseMatrix>& rels, const std::vector<double>& w) {
  DenseMatrix sum(rels[0].rows(), rels[0].cols());
  for (std::size_t m = 0; m < rels.size(); ++m) {
    for (std::size_t k = 0; k < sum.size(); ++k) sum.values()[k] += w[m] * rels[m].values()[k];
  }
  return mhnf::testing::dense_masked_softmax(sum);
}

}  // namespace

TEST_CASE("mix_hop") {
  SUBCASE("one-hot selects a relation with uniform rows") {
    const auto g = acm_toy();
    const std::vector<double> w{1.0, 0.0, 0.0, 0.0};
    const auto a = mix_hop(g, w);
    CHECK(a.same_pattern(g.relations[0].matrix));
    CHECK(a.at(0, 4) == 0.5);
    CHECK(a.at(0, 5) == 0.5);
    CHECK(a.at(1, 5) == 1.0);
  }
  SUBCASE("no edges gives an empty matrix") {
    std::vector<SparseMatrix> empty{SparseMatrix(5, 5), SparseMatrix(5, 5)};
    const std::vector<double> w{0.3, 0.7};
    CHECK(mix_hop(nd::union_pattern(empty), w).nnz() == 0);
  }
  SUBCASE("dense oracle, 6 nodes, weights [1.0, 0.5]") {
    Rng rng(1);
    std::vector<DenseMatrix> dense{random_sparse_dense(rng, 6, 6, 0.4, 1.0, 1.0),
                                   random_sparse_dense(rng, 6, 6, 0.4, 1.0, 1.0)};
    for (auto& d : dense) {
      for (double& v : d.values()) v = v != 0.0 ? 1.0 : 0.0;
    }
    const std::vector<double> w{1.0, 0.5};
    std::vector<SparseMatrix> rels{to_csr(dense[0]), to_csr(dense[1])};
    CHECK(max_abs_diff(densify(mix_hop(nd::union_pattern(rels), w)), dense_mix(dense, w)) < 1e-12);
  }
  SUBCASE("weight count mismatch") {
    const auto g = acm_toy();
    const std::vector<double> w{1.0};
    CHECK_THROWS_AS(mix_hop(g, w), ShapeError);
  }
}

TEST_CASE("chain_hops") {
  Rng rng(2);
  SUBCASE("single hop unchanged") {
    auto a = to_csr(random_sparse_dense(rng, 5, 5, 0.4));
    std::vector<SparseMatrix> mixes{a};
    auto c = chain_hops(mixes);
    REQUIRE(c.size() == 1);
    CHECK(c[0] == a);
  }
  SUBCASE("identities stay identities") {
    std::vector<SparseMatrix> mixes(3, SparseMatrix::identity(4));
    for (const auto& a : chain_hops(mixes)) CHECK(a == SparseMatrix::identity(4));
  }
  SUBCASE("8 nodes, L=3, path enumeration") {
    std::vector<SparseMatrix> rels;
    for (int m = 0; m < 2; ++m) rels.push_back(to_csr(random_sparse_dense(rng, 8, 8, 0.3, 1.0, 1.0)));
    const auto pattern = nd::union_pattern(rels);
    std::vector<SparseMatrix> mixes;
    std::vector<DenseMatrix> dense_mixes;
    for (int l = 0; l < 3; ++l) {
      const std::vector<double> w{rng.uniform(-2, 2), rng.uniform(-2, 2)};
      mixes.push_back(mix_hop(pattern, w));
      dense_mixes.push_back(densify(mixes.back()));
    }
    const auto chain = chain_hops(mixes);
    for (std::size_t l = 1; l <= 3; ++l) {
      std::vector<DenseMatrix> prefix(dense_mixes.begin(), dense_mixes.begin() + static_cast<std::ptrdiff_t>(l));
      CHECK(max_abs_diff(densify(chain[l - 1]), enumerate_walks(prefix)) < 1e-12);
    }
  }
  SUBCASE("empty list") { CHECK_THROWS_AS(chain_hops(std::span<const SparseMatrix>{}), ShapeError); }
}

TEST_CASE("property: chains match enumeration, rows substochastic, permutation equivariant") {
  Rng rng(3);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n = 2 + rng.below(11), nrel = 1 + rng.below(3), hops = 1 + rng.below(3);
    std::vector<SparseMatrix> rels;
    for (std::size_t m = 0; m < nrel; ++m) rels.push_back(to_csr(random_sparse_dense(rng, n, n, 0.35, 1.0, 1.0)));
    std::vector<std::vector<double>> ws;
    for (std::size_t l = 0; l < hops; ++l) {
      ws.emplace_back();
      for (std::size_t m = 0; m < nrel; ++m) ws.back().push_back(rng.uniform(0.1, 2.0));
    }
    const auto pattern = nd::union_pattern(rels);
    std::vector<SparseMatrix> mixes;
    std::vector<DenseMatrix> dense;
    for (const auto& w : ws) {
      mixes.push_back(mix_hop(pattern, w));
      dense.push_back(densify(mixes.back()));
    }
    const auto chain = chain_hops(mixes);
    REQUIRE(max_abs_diff(densify(chain.back()), enumerate_walks(dense)) < 1e-9);
    for (const auto& a : chain) {
      for (std::size_t r = 0; r < n; ++r) {
        double s = 0.0;
        for (double v : a.row_values(r)) s += v;
        REQUIRE(s <= 1.0 + 1e-9);
      }
    }

    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    rng.shuffle(perm.begin(), perm.end());
    auto permute = [&](const SparseMatrix& a) {
      std::vector<nd::Triplet> t;
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = a.row_ptr()[i]; k < a.row_ptr()[i + 1]; ++k) {
          t.push_back({static_cast<nd::Index>(perm[i]), static_cast<nd::Index>(perm[a.col_idx()[k]]), a.values()[k]});
        }
      }
      return SparseMatrix::from_triplets(n, n, t);
    };
    std::vector<SparseMatrix> prels;
    for (const auto& r : rels) prels.push_back(permute(r));
    const auto ppattern = nd::union_pattern(prels);
    std::vector<SparseMatrix> pmixes;
    for (const auto& w : ws) pmixes.push_back(mix_hop(ppattern, w));
    const auto pchain = chain_hops(pmixes);
    for (std::size_t l = 0; l < hops; ++l) {
      REQUIRE(max_abs_diff(densify(pchain[l]), densify(permute(chain[l]))) < 1e-12);
    }
  }
}

TEST_CASE("tape hop chain matches the plain computation") {
  const auto g = acm_toy();
  const auto pattern = nd::union_pattern(g.relation_matrices());
  const std::vector<double> w1{0.3, 1.2, -0.4, 0.9}, w2{1.0, 0.1, 0.5, -1.0};
  std::vector<SparseMatrix> mixes{mix_hop(pattern, w1), mix_hop(pattern, w2)};
  const auto plain = chain_hops(mixes);

  nd::Tape t;
  auto v1 = t.parameter(DenseMatrix(4, 1, std::vector<double>(w1)));
  auto v2 = t.parameter(DenseMatrix(4, 1, std::vector<double>(w2)));
  std::vector<nd::SpVar> tm{mix_hop(t, pattern, v1), mix_hop(t, pattern, v2)};
  const auto tc = chain_hops(t, tm);
  CHECK(t.value(tc[0]) == plain[0]);
  CHECK(t.value(tc[1]) == plain[1]);
}

TEST_CASE("extract builds independent chains per path") {
  const auto g = acm_toy();
  auto params = PathMixerParams::constant(2, 2, g.num_relations(), 1.0);
  params.at(1, 1) = {5.0, 0.0, 0.0, 0.0};
  const auto h = extract(g, params);
  REQUIRE(h.chains.size() == 2);
  CHECK(h.chains[0].size() == 2);
  CHECK(h.mixes[0][0] == mix_hop(g, params.at(0, 1)));
  CHECK_FALSE(h.chains[0][0] == h.chains[1][0]);
  CHECK(h.chains[0][1] == nd::spspmm(h.mixes[0][0], h.mixes[0][1]));
}

TEST_CASE("report_learned_paths") {
  SUBCASE("uniform weights: 16 sequences with mixer factor 1/16") {
    auto params = PathMixerParams::constant(1, 2, 4, 0.0);
    const std::vector<std::vector<double>> attn{{0.2, 0.3, 0.5}};
    const auto r = report_learned_paths(params, attn, 100);
    REQUIRE(r[0].size() == 16);
    for (const auto& p : r[0]) {
      CHECK(p.mixer_factor == doctest::Approx(1.0 / 16).epsilon(1e-14));
      CHECK(p.score == doctest::Approx(0.5 / 16).epsilon(1e-14));
    }
    CHECK(r[0][0].relations == std::vector<std::size_t>{0, 0});
    CHECK(r[0][15].relations == std::vector<std::size_t>{3, 3});
  }
  SUBCASE("one-hot weights: single dominant sequence scored by hop attention") {
    auto params = PathMixerParams::constant(1, 2, 3, 0.0);
    params.at(0, 1) = {0.0, 800.0, 0.0};
    params.at(0, 2) = {0.0, 0.0, 800.0};
    const std::vector<std::vector<double>> attn{{0.1, 0.2, 0.7}};
    const auto r = report_learned_paths(params, attn, 3);
    REQUIRE(r[0].size() == 3);
    CHECK(r[0][0].relations == std::vector<std::size_t>{1, 2});
    CHECK(r[0][0].score == doctest::Approx(0.7).epsilon(1e-12));
    CHECK(r[0][1].score < 1e-300);
  }
  SUBCASE("schema flags infeasible sequences and ranks them last") {
    const auto g = acm_toy();
    auto params = PathMixerParams::constant(1, 2, 4, 0.0);
    params.at(0, 1) = {0.0, 3.0, 0.0, 0.0};  // favours AP, infeasible from P
    const std::vector<std::vector<double>> attn{{0.3, 0.3, 0.4}};
    const auto r = report_learned_paths(params, attn, 16, path_schema(g));
    // feasible from P: PA->AP, PS->SP
    CHECK(r[0][0].feasible);
    CHECK(r[0][1].feasible);
    CHECK_FALSE(r[0][2].feasible);
    CHECK(path_label(r[0][0], g.relation_names()) == "PA -> AP");
    CHECK(path_label(r[0][1], g.relation_names()) == "PS -> SP");
  }
  SUBCASE("top_k truncates per path") {
    auto params = PathMixerParams::constant(2, 2, 4, 0.0);
    const std::vector<std::vector<double>> attn{{0.3, 0.3, 0.4}, {0.3, 0.3, 0.4}};
    const auto r = report_learned_paths(params, attn, 3);
    CHECK(r[0].size() == 3);
    CHECK(r[1].size() == 3);
    CHECK(r[1][0].path == 1);
  }
}

TEST_CASE("relation_softmax") {
  const std::vector<double> w{1.0, 2.0};
  const auto s = relation_softmax(w);
  const double e = std::exp(1.0);
  CHECK(std::abs(s[0] - 1.0 / (1.0 + e)) < 1e-15);
  CHECK(std::abs(s[1] - e / (1.0 + e)) < 1e-15);
}

TEST_CASE("mixing weights receive gradient") {
  const auto g = acm_toy();
  const auto pattern = nd::union_pattern(g.relation_matrices());
  nd::Tape t;
  auto w = t.parameter(DenseMatrix(4, 1, std::vector<double>{1.0, 0.5, 2.0, 1.0}));
  Rng rng(5);
  auto x = t.constant(mhnf::testing::random_dense(rng, 9, 2));
  auto y = nd::spmm(t, mix_hop(t, pattern, w), x);
  t.backward(nd::sum(t, nd::tanh_op(t, y)));
  double norm = 0.0;
  for (double v : t.grad(w).values()) norm += std::abs(v);
  CHECK(norm > 0.0);
}
