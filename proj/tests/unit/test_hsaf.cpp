// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include "doctest.h"
#include "mhnf/model/hsaf.hpp"
#include "mhnf/nd/ops.hpp"
#include "support/oracles.hpp"

using namespace mhnf;
using namespace mhnf::model;
using nd::DenseMatrix;
using mhnf::testing::max_abs_diff;
using mhnf::testing::random_dense;

namespace {

// leaky_relu(Σ_k δ_k tanh(Σ_j z_j Wa_jk)) for one row.
double scalar_score(const DenseMatrix& z, std::size_t row, const DenseMatrix& wa, const DenseMatrix& delta) {
  double s = 0.0;
  for (std::size_t k = 0; k < wa.cols(); ++k) {
    double u = 0.0;
    for (std::size_t j = 0; j < wa.rows(); ++j) u += z(row, j) * wa(j, k);
    s += delta(k, 0) * std::tanh(u);
  }
  return s > 0 ? s : 0.01 * s;
}

std::vector<nd::Var> constants(nd::Tape& t, const std::vector<DenseMatrix>& ms) {
  std::vector<nd::Var> out;
  for (const auto& m : ms) out.push_back(t.constant(m));
  return out;
}

}  // namespace

TEST_CASE("attention_scores") {
  Rng rng(1);
  std::vector<DenseMatrix> z{random_dense(rng, 4, 3), random_dense(rng, 4, 3), random_dense(rng, 4, 3)};
  auto wa = random_dense(rng, 3, 5), delta = random_dense(rng, 5, 1);
  SUBCASE("zero delta") {
    nd::Tape t;
    auto s = attention_scores(t, constants(t, z), t.constant(wa), t.constant(DenseMatrix(5, 1)));
    CHECK(t.value(s) == DenseMatrix(4, 3));
  }
  SUBCASE("identical parts give identical scores") {
    nd::Tape t;
    std::vector<DenseMatrix> same(3, z[0]);
    const auto& s = t.value(attention_scores(t, constants(t, same), t.constant(wa), t.constant(delta)));
    for (std::size_t i = 0; i < 4; ++i) CHECK((s(i, 0) == s(i, 1) && s(i, 1) == s(i, 2)));
  }
  SUBCASE("scalar chain oracle") {
    nd::Tape t;
    const auto& s = t.value(attention_scores(t, constants(t, z), t.constant(wa), t.constant(delta)));
    for (std::size_t i = 0; i < 4; ++i) {
      for (std::size_t l = 0; l < 3; ++l) CHECK(std::abs(s(i, l) - scalar_score(z[l], i, wa, delta)) < 1e-12);
    }
  }
}

TEST_CASE("hop fusion") {
  Rng rng(2);
  SUBCASE("single part") {
    auto z = random_dense(rng, 3, 2);
    nd::Tape t;
    std::vector<nd::Var> parts{t.constant(z)};
    auto f = fuse(t, parts, t.constant(random_dense(rng, 3, 1)));
    CHECK(t.value(f.weights) == DenseMatrix(3, 1, 1.0));
    CHECK(t.value(f.fused) == z);
  }
  SUBCASE("equal scores average the parts") {
    std::vector<DenseMatrix> z{random_dense(rng, 3, 2), random_dense(rng, 3, 2), random_dense(rng, 3, 2)};
    nd::Tape t;
    auto f = fuse(t, constants(t, z), t.constant(DenseMatrix(3, 3, 0.7)));
    for (double b : t.value(f.weights).values()) CHECK(b == doctest::Approx(1.0 / 3).epsilon(1e-15));
    DenseMatrix mean(3, 2);
    for (std::size_t k = 0; k < 6; ++k) mean.values()[k] = (z[0].values()[k] + z[1].values()[k] + z[2].values()[k]) / 3;
    CHECK(max_abs_diff(t.value(f.fused), mean) < 1e-15);
  }
  SUBCASE("scores [1, 2]") {
    std::vector<DenseMatrix> z{random_dense(rng, 2, 3), random_dense(rng, 2, 3)};
    nd::Tape t;
    auto f = fuse(t, constants(t, z), t.constant(DenseMatrix::from_rows({{1, 2}, {1, 2}})));
    const double e = std::exp(1.0), b0 = 1 / (1 + e), b1 = e / (1 + e);
    CHECK(std::abs(t.value(f.weights)(0, 0) - b0) < 1e-15);
    CHECK(t.value(f.weights)(1, 1) == doctest::Approx(0.7311).epsilon(1e-4));
    for (std::size_t i = 0; i < 2; ++i) {
      for (std::size_t j = 0; j < 3; ++j) {
        CHECK(std::abs(t.value(f.fused)(i, j) - (b0 * z[0](i, j) + b1 * z[1](i, j))) < 1e-15);
      }
    }
  }
  SUBCASE("shift invariance") {
    std::vector<DenseMatrix> z{random_dense(rng, 4, 2), random_dense(rng, 4, 2), random_dense(rng, 4, 2)};
    auto s = random_dense(rng, 4, 3);
    auto shifted = s;
    for (std::size_t i = 0; i < 4; ++i) {
      for (std::size_t l = 0; l < 3; ++l) shifted(i, l) += 3.0 * static_cast<double>(i) - 5.0;
    }
    nd::Tape t;
    auto a = fuse(t, constants(t, z), t.constant(s));
    auto b = fuse(t, constants(t, z), t.constant(shifted));
    CHECK(max_abs_diff(t.value(a.weights), t.value(b.weights)) < 1e-9);
    CHECK(max_abs_diff(t.value(a.fused), t.value(b.fused)) < 1e-9);
  }
}

TEST_CASE("path fusion") {
  Rng rng(3);
  auto wa = random_dense(rng, 3, 4), delta = random_dense(rng, 4, 1);
  SUBCASE("one path passes through") {
    auto z = random_dense(rng, 5, 3);
    nd::Tape t;
    std::vector<nd::Var> parts{t.constant(z)};
    auto f = path_fuse(t, parts, t.constant(wa), t.constant(delta));
    CHECK(t.value(f.fused) == z);
  }
  SUBCASE("identical paths split evenly") {
    auto z = random_dense(rng, 5, 3);
    nd::Tape t;
    std::vector<nd::Var> parts{t.constant(z), t.constant(z)};
    auto f = path_fuse(t, parts, t.constant(wa), t.constant(delta));
    for (double b : t.value(f.weights).values()) CHECK(b == 0.5);
    CHECK(max_abs_diff(t.value(f.fused), z) < 1e-15);
  }
  SUBCASE("two paths: scalar oracle") {
    std::vector<DenseMatrix> z{random_dense(rng, 5, 3), random_dense(rng, 5, 3)};
    nd::Tape t;
    auto f = path_fuse(t, constants(t, z), t.constant(wa), t.constant(delta));
    for (std::size_t i = 0; i < 5; ++i) {
      const double s0 = scalar_score(z[0], i, wa, delta), s1 = scalar_score(z[1], i, wa, delta);
      const double b0 = std::exp(s0) / (std::exp(s0) + std::exp(s1));
      CHECK(std::abs(t.value(f.weights)(i, 0) - b0) < 1e-12);
      for (std::size_t j = 0; j < 3; ++j) {
        CHECK(std::abs(t.value(f.fused)(i, j) - (b0 * z[0](i, j) + (1 - b0) * z[1](i, j))) < 1e-12);
      }
    }
  }
}

TEST_CASE("classify") {
  Rng rng(4);
  auto w = random_dense(rng, 3, 2), b = random_dense(rng, 1, 2);
  nd::Tape t;
  const auto& zero = t.value(classify(t, t.constant(DenseMatrix(4, 3)), t.constant(w), t.constant(b)));
  for (std::size_t i = 0; i < 4; ++i) CHECK((zero(i, 0) == b(0, 0) && zero(i, 1) == b(0, 1)));
  const auto& pass = t.value(classify(t, t.constant(DenseMatrix::from_rows({{2.5}})), t.constant(DenseMatrix(1, 1, 1.0)),
                                      t.constant(DenseMatrix(1, 1))));
  CHECK(pass(0, 0) == 2.5);
  auto z = random_dense(rng, 4, 3);
  const auto& out = t.value(classify(t, t.constant(z), t.constant(w), t.constant(b)));
  auto expected = mhnf::testing::naive_matmul(z, w);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 2; ++j) expected(i, j) += b(0, j);
  }
  CHECK(max_abs_diff(out, expected) < 1e-12);
}

TEST_CASE("attention audit") {
  AttentionAudit::reset();
  AttentionAudit::enable(true);
  Rng rng(5);
  std::vector<DenseMatrix> z{random_dense(rng, 6, 3), random_dense(rng, 6, 3)};
  nd::Tape t;
  fuse(t, constants(t, z), t.constant(random_dense(rng, 6, 2, -5, 5)));
  CHECK(AttentionAudit::checks() == 1);
  CHECK(AttentionAudit::failures() == 0);
  auto bad = DenseMatrix(6, 2, 0.6);
  CHECK_FALSE(AttentionAudit::check(bad, z, z[0]));
  CHECK(AttentionAudit::failures() == 1);
  CHECK(AttentionAudit::first_failure().find("sums to") != std::string::npos);
  AttentionAudit::enable(false);
  AttentionAudit::reset();
}

TEST_CASE("attention parameters pass finite differences") {
  Rng rng(6);
  std::vector<DenseMatrix> z{random_dense(rng, 5, 3), random_dense(rng, 5, 3), random_dense(rng, 5, 3)};
  auto wa = random_dense(rng, 3, 4), delta = random_dense(rng, 4, 1);
  auto r = mhnf::testing::grad_check({wa, delta, z[0], z[1], z[2]}, {}, [](nd::Tape& t, auto& d, auto&) {
    std::vector<nd::Var> parts{d[2], d[3], d[4]};
    auto f = hop_fuse(t, parts, d[0], d[1]);
    return nd::sum(t, nd::tanh_op(t, f.fused));
  });
  INFO(r.worst);
  CHECK(r.max_rel_error < 1e-6);
}
