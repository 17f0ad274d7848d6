// SPDX-License-Identifier: Apache-2.0
#include "mhnf/nd/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mhnf/error.hpp"

namespace mhnf::nd {

namespace {

void require(bool ok, const char* op, const std::string& detail) {
  if (!ok) throw ShapeError(std::string(op) + ": " + detail);
}

std::string pair_str(std::size_t ar, std::size_t ac, std::size_t br, std::size_t bc) {
  return shape_str(ar, ac) + " vs " + shape_str(br, bc);
}

template <typename F>
DenseMatrix map(const DenseMatrix& a, F f) {
  DenseMatrix out(a.rows(), a.cols());
  auto src = a.values();
  auto dst = out.values();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = f(src[i]);
  return out;
}

}  // namespace

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
  require(a.cols() == b.rows(), "matmul", pair_str(a.rows(), a.cols(), b.rows(), b.cols()));
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  DenseMatrix c(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    double* crow = c.row(i).data();
    const double* arow = a.row(i).data();
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = b.row(p).data();
      for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

DenseMatrix matmul_tn(const DenseMatrix& a, const DenseMatrix& b) {
  require(a.rows() == b.rows(), "matmul_tn", pair_str(a.rows(), a.cols(), b.rows(), b.cols()));
  const std::size_t n = a.cols(), m = b.cols();
  DenseMatrix c(n, m);
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const double* arow = a.row(r).data();
    const double* brow = b.row(r).data();
    for (std::size_t i = 0; i < n; ++i) {
      const double av = arow[i];
      if (av == 0.0) continue;
      double* crow = c.row(i).data();
      for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

DenseMatrix matmul_nt(const DenseMatrix& a, const DenseMatrix& b) {
  require(a.cols() == b.cols(), "matmul_nt", pair_str(a.rows(), a.cols(), b.rows(), b.cols()));
  const std::size_t n = a.rows(), m = b.rows(), k = a.cols();
  DenseMatrix c(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    const double* arow = a.row(i).data();
    for (std::size_t j = 0; j < m; ++j) {
      const double* brow = b.row(j).data();
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
      c(i, j) = s;
    }
  }
  return c;
}

DenseMatrix transpose(const DenseMatrix& a) {
  DenseMatrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  }
  return t;
}

DenseMatrix spmm(const SparseMatrix& a, const DenseMatrix& b) {
  require(a.cols() == b.rows(), "spmm", pair_str(a.rows(), a.cols(), b.rows(), b.cols()));
  const std::size_t m = b.cols();
  DenseMatrix c(a.rows(), m);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* crow = c.row(i).data();
    auto cols = a.row_cols(i);
    auto vals = a.row_values(i);
    for (std::size_t k = 0; k < cols.size(); ++k) {
      const double av = vals[k];
      const double* brow = b.row(cols[k]).data();
      for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

DenseMatrix spmm_tn(const SparseMatrix& a, const DenseMatrix& b) {
  require(a.rows() == b.rows(), "spmm_tn", pair_str(a.rows(), a.cols(), b.rows(), b.cols()));
  const std::size_t m = b.cols();
  DenseMatrix c(a.cols(), m);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* brow = b.row(i).data();
    auto cols = a.row_cols(i);
    auto vals = a.row_values(i);
    for (std::size_t k = 0; k < cols.size(); ++k) {
      const double av = vals[k];
      double* crow = c.row(cols[k]).data();
      for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

SparseMatrix spspmm(const SparseMatrix& a, const SparseMatrix& b, double threshold) {
  require(a.cols() == b.rows(), "spspmm", pair_str(a.rows(), a.cols(), b.rows(), b.cols()));
  const std::size_t n = a.rows(), m = b.cols();
  // Gustavson row-by-row with a dense accumulator. Each output entry sums its
  // contributions in ascending order of the inner index.
  std::vector<double> acc(m, 0.0);
  std::vector<char> touched(m, 0);
  std::vector<Index> cols;
  SparseBuilder out(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    cols.clear();
    auto acols = a.row_cols(i);
    auto avals = a.row_values(i);
    for (std::size_t p = 0; p < acols.size(); ++p) {
      const double av = avals[p];
      auto bcols = b.row_cols(acols[p]);
      auto bvals = b.row_values(acols[p]);
      for (std::size_t q = 0; q < bcols.size(); ++q) {
        const Index j = bcols[q];
        if (!touched[j]) {
          touched[j] = 1;
          cols.push_back(j);
        }
        acc[j] += av * bvals[q];
      }
    }
    std::sort(cols.begin(), cols.end());
    for (Index j : cols) {
      if (std::abs(acc[j]) > threshold) out.push(j, acc[j]);
      acc[j] = 0.0;
      touched[j] = 0;
    }
    out.end_row();
  }
  return std::move(out).finish();
}

UnionPattern union_pattern(std::span<const SparseMatrix> mats) {
  if (mats.empty()) throw ShapeError("weighted_sum_sparse: empty relation list");
  UnionPattern u;
  u.rows = mats[0].rows();
  u.cols = mats[0].cols();
  for (const auto& m : mats) {
    require(m.rows() == u.rows && m.cols() == u.cols, "weighted_sum_sparse",
            "shape mismatch " + pair_str(u.rows, u.cols, m.rows(), m.cols()));
  }
  const std::size_t count = mats.size();
  u.positions.resize(count);
  u.values.resize(count);
  for (std::size_t m = 0; m < count; ++m) {
    u.positions[m].resize(mats[m].nnz());
    u.values[m].assign(mats[m].values().begin(), mats[m].values().end());
  }
  u.row_ptr.assign(u.rows + 1, 0);
  std::vector<std::size_t> cursor(count);
  for (std::size_t r = 0; r < u.rows; ++r) {
    for (std::size_t m = 0; m < count; ++m) cursor[m] = mats[m].row_ptr()[r];
    // k-way merge of the sorted rows
    while (true) {
      Index next = std::numeric_limits<Index>::max();
      bool any = false;
      for (std::size_t m = 0; m < count; ++m) {
        if (cursor[m] < mats[m].row_ptr()[r + 1]) {
          next = std::min(next, mats[m].col_idx()[cursor[m]]);
          any = true;
        }
      }
      if (!any) break;
      const std::size_t slot = u.col_idx.size();
      u.col_idx.push_back(next);
      for (std::size_t m = 0; m < count; ++m) {
        if (cursor[m] < mats[m].row_ptr()[r + 1] && mats[m].col_idx()[cursor[m]] == next) {
          u.positions[m][cursor[m]] = slot;
          ++cursor[m];
        }
      }
    }
    u.row_ptr[r + 1] = u.col_idx.size();
  }
  return u;
}

SparseMatrix weighted_sum_sparse(const UnionPattern& u, std::span<const double> w) {
  require(w.size() == u.num_inputs(), "weighted_sum_sparse",
          std::to_string(w.size()) + " weights for " + std::to_string(u.num_inputs()) + " relations");
  std::vector<double> values(u.nnz(), 0.0);
  for (std::size_t m = 0; m < u.num_inputs(); ++m) {
    const double wm = w[m];
    const auto& pos = u.positions[m];
    const auto& val = u.values[m];
    for (std::size_t k = 0; k < pos.size(); ++k) values[pos[k]] += wm * val[k];
  }
  return SparseMatrix(u.rows, u.cols, u.row_ptr, u.col_idx, std::move(values));
}

SparseMatrix weighted_sum_sparse(std::span<const SparseMatrix> mats, std::span<const double> w) {
  return weighted_sum_sparse(union_pattern(mats), w);
}

SparseMatrix masked_row_softmax(const SparseMatrix& a) {
  std::vector<double> out(a.nnz());
  constexpr double kFloor = std::numeric_limits<double>::min();
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const std::size_t lo = a.row_ptr()[r], hi = a.row_ptr()[r + 1];
    if (lo == hi) continue;
    auto v = a.values();
    double mx = v[lo];
    for (std::size_t k = lo + 1; k < hi; ++k) mx = std::max(mx, v[k]);
    double s = 0.0;
    for (std::size_t k = lo; k < hi; ++k) {
      out[k] = std::exp(v[k] - mx);
      s += out[k];
    }
    // floor keeps far-below-max entries stored, so the pattern is preserved
    for (std::size_t k = lo; k < hi; ++k) out[k] = std::max(out[k] / s, kFloor);
  }
  return a.with_values(std::move(out));
}

std::vector<double> row_sums(const SparseMatrix& a) {
  std::vector<double> s(a.rows(), 0.0);
  for (std::size_t r = 0; r < a.rows(); ++r) {
    for (double v : a.row_values(r)) s[r] += v;
  }
  return s;
}

SparseMatrix normalize_rows(const SparseMatrix& a) {
  const auto sums = row_sums(a);
  std::vector<double> out(a.nnz());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const double inv = sums[r] == 0.0 ? 0.0 : 1.0 / sums[r];
    for (std::size_t k = a.row_ptr()[r]; k < a.row_ptr()[r + 1]; ++k) out[k] = a.values()[k] * inv;
  }
  return a.with_values(std::move(out));
}

DenseMatrix relu(const DenseMatrix& a) {
  return map(a, [](double x) { return x > 0.0 ? x : 0.0; });
}

DenseMatrix leaky_relu(const DenseMatrix& a, double slope) {
  return map(a, [slope](double x) { return x > 0.0 ? x : slope * x; });
}

DenseMatrix tanh_op(const DenseMatrix& a) {
  return map(a, [](double x) { return std::tanh(x); });
}

DenseMatrix exp_op(const DenseMatrix& a) {
  return map(a, [](double x) { return std::exp(x); });
}

DenseMatrix log_op(const DenseMatrix& a) {
  return map(a, [](double x) {
    if (!(x > 0.0)) throw NumericError("log_op: non-positive input");
    return std::log(x);
  });
}

DenseMatrix row_softmax_dense(const DenseMatrix& a) {
  DenseMatrix out(a.rows(), a.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    auto in = a.row(r);
    auto o = out.row(r);
    if (in.empty()) continue;
    const double mx = *std::max_element(in.begin(), in.end());
    double s = 0.0;
    for (std::size_t j = 0; j < in.size(); ++j) {
      o[j] = std::exp(in[j] - mx);
      s += o[j];
    }
    for (double& x : o) x /= s;
  }
  return out;
}

double cross_entropy(const DenseMatrix& logits, std::span<const int> labels,
                     std::span<const std::size_t> rows) {
  if (rows.empty()) throw ShapeError("cross_entropy: empty mask, loss undefined");
  require(labels.size() == logits.rows(), "cross_entropy", "labels length differs from logits rows");
  double total = 0.0;
  for (std::size_t r : rows) {
    require(r < logits.rows(), "cross_entropy", "mask row out of range");
    const int y = labels[r];
    require(y >= 0 && static_cast<std::size_t>(y) < logits.cols(), "cross_entropy",
            "label out of range at row " + std::to_string(r));
    auto z = logits.row(r);
    const double mx = *std::max_element(z.begin(), z.end());
    double s = 0.0;
    for (double v : z) s += std::exp(v - mx);
    total += (mx + std::log(s)) - z[static_cast<std::size_t>(y)];
  }
  return total / static_cast<double>(rows.size());
}

}  // namespace mhnf::nd
