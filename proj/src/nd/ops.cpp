// SPDX-License-Identifier: Apache-2.0
#include "mhnf/nd/ops.hpp"

#include <algorithm>
#include <cmath>

#include "mhnf/error.hpp"

namespace mhnf::nd {

namespace {

bool any_grad(const Tape& t, std::span<const Var> vs) {
  return std::any_of(vs.begin(), vs.end(), [&](Var v) { return t.requires_grad(v); });
}

// Slot of each raw value after exact zeros are compacted away (kNoNode if dropped).
std::vector<std::size_t> compaction_map(std::span<const double> raw) {
  std::vector<std::size_t> map(raw.size(), kNoNode);
  std::size_t next = 0;
  for (std::size_t k = 0; k < raw.size(); ++k) {
    if (raw[k] != 0.0) map[k] = next++;
  }
  return map;
}

void add_into(std::span<double> dst, std::span<const double> src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

DenseMatrix as_matrix(std::span<const double> g, std::size_t rows, std::size_t cols) {
  return DenseMatrix(rows, cols, std::vector<double>(g.begin(), g.end()));
}

}  // namespace

Var matmul(Tape& t, Var a, Var b) {
  DenseMatrix out = matmul(t.value(a), t.value(b));
  const bool rg = t.requires_grad(a) || t.requires_grad(b);
  const std::size_t rows = out.rows(), cols = out.cols();
  return t.push(std::move(out), rg, [a, b, rows, cols](Tape& t, std::span<const double> up) {
    const DenseMatrix g = as_matrix(up, rows, cols);
    if (auto ga = t.accumulator(a.id); !ga.empty()) add_into(ga, matmul_nt(g, t.value(b)).values());
    if (auto gb = t.accumulator(b.id); !gb.empty()) add_into(gb, matmul_tn(t.value(a), g).values());
  });
}

Var add(Tape& t, Var a, Var b) {
  const auto& av = t.value(a);
  const auto& bv = t.value(b);
  if (!av.same_shape(bv)) throw ShapeError("add: " + av.shape_str() + " vs " + bv.shape_str());
  DenseMatrix out = av;
  auto o = out.values();
  auto bb = bv.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += bb[i];
  const bool rg = t.requires_grad(a) || t.requires_grad(b);
  return t.push(std::move(out), rg, [a, b](Tape& t, std::span<const double> up) {
    if (auto ga = t.accumulator(a.id); !ga.empty()) add_into(ga, up);
    if (auto gb = t.accumulator(b.id); !gb.empty()) add_into(gb, up);
  });
}

Var add_row_bias(Tape& t, Var a, Var bias) {
  const auto& av = t.value(a);
  const auto& bv = t.value(bias);
  if (bv.rows() != 1 || bv.cols() != av.cols()) {
    throw ShapeError("add_row_bias: " + av.shape_str() + " with bias " + bv.shape_str());
  }
  DenseMatrix out = av;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += bv(0, c);
  }
  const bool rg = t.requires_grad(a) || t.requires_grad(bias);
  const std::size_t rows = av.rows(), cols = av.cols();
  return t.push(std::move(out), rg, [a, bias, rows, cols](Tape& t, std::span<const double> up) {
    if (auto ga = t.accumulator(a.id); !ga.empty()) add_into(ga, up);
    if (auto gb = t.accumulator(bias.id); !gb.empty()) {
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) gb[c] += up[r * cols + c];
      }
    }
  });
}

Var scale(Tape& t, Var a, double factor) {
  DenseMatrix out = t.value(a);
  for (double& v : out.values()) v *= factor;
  return t.push(std::move(out), t.requires_grad(a), [a, factor](Tape& t, std::span<const double> up) {
    auto ga = t.accumulator(a.id);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += factor * up[i];
  });
}

Var relu(Tape& t, Var a) { return leaky_relu(t, a, 0.0); }

Var leaky_relu(Tape& t, Var a, double slope) {
  DenseMatrix out = leaky_relu(t.value(a), slope);
  return t.push(std::move(out), t.requires_grad(a), [a, slope](Tape& t, std::span<const double> up) {
    auto x = t.value(a).values();
    auto ga = t.accumulator(a.id);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += x[i] > 0.0 ? up[i] : slope * up[i];
  });
}

Var tanh_op(Tape& t, Var a) {
  const std::size_t self = t.size();
  DenseMatrix out = tanh_op(t.value(a));
  return t.push(std::move(out), t.requires_grad(a), [a, self](Tape& t, std::span<const double> up) {
    auto y = t.value(Var{self}).values();
    auto ga = t.accumulator(a.id);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += up[i] * (1.0 - y[i] * y[i]);
  });
}

Var exp_op(Tape& t, Var a) {
  const std::size_t self = t.size();
  DenseMatrix out = exp_op(t.value(a));
  return t.push(std::move(out), t.requires_grad(a), [a, self](Tape& t, std::span<const double> up) {
    auto y = t.value(Var{self}).values();
    auto ga = t.accumulator(a.id);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += up[i] * y[i];
  });
}

Var log_op(Tape& t, Var a) {
  DenseMatrix out = log_op(t.value(a));
  return t.push(std::move(out), t.requires_grad(a), [a](Tape& t, std::span<const double> up) {
    auto x = t.value(a).values();
    auto ga = t.accumulator(a.id);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += up[i] / x[i];
  });
}

Var row_softmax_dense(Tape& t, Var a) {
  const std::size_t self = t.size();
  DenseMatrix out = row_softmax_dense(t.value(a));
  return t.push(std::move(out), t.requires_grad(a), [a, self](Tape& t, std::span<const double> up) {
    const auto& y = t.value(Var{self});
    auto ga = t.accumulator(a.id);
    const std::size_t c = y.cols();
    for (std::size_t r = 0; r < y.rows(); ++r) {
      auto yr = y.row(r);
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += yr[j] * up[r * c + j];
      for (std::size_t j = 0; j < c; ++j) ga[r * c + j] += yr[j] * (up[r * c + j] - dot);
    }
  });
}

Var sum(Tape& t, Var a) {
  double s = 0.0;
  for (double v : t.value(a).values()) s += v;
  return t.push(DenseMatrix(1, 1, s), t.requires_grad(a), [a](Tape& t, std::span<const double> up) {
    auto ga = t.accumulator(a.id);
    for (double& g : ga) g += up[0];
  });
}

Var concat_rows(Tape& t, std::span<const Var> blocks) {
  if (blocks.empty()) throw ShapeError("concat_rows: no blocks");
  const std::size_t cols = t.value(blocks[0]).cols();
  std::size_t rows = 0;
  for (Var b : blocks) {
    if (t.value(b).cols() != cols) {
      throw ShapeError("concat_rows: column mismatch " + t.value(blocks[0]).shape_str() + " vs " +
                       t.value(b).shape_str());
    }
    rows += t.value(b).rows();
  }
  std::vector<double> out;
  out.reserve(rows * cols);
  for (Var b : blocks) {
    auto v = t.value(b).values();
    out.insert(out.end(), v.begin(), v.end());
  }
  std::vector<Var> parts(blocks.begin(), blocks.end());
  return t.push(DenseMatrix(rows, cols, std::move(out)), any_grad(t, blocks),
                [parts](Tape& t, std::span<const double> up) {
                  std::size_t offset = 0;
                  for (Var b : parts) {
                    const std::size_t n = t.value(b).size();
                    if (auto gb = t.accumulator(b.id); !gb.empty()) add_into(gb, up.subspan(offset, n));
                    offset += n;
                  }
                });
}

Var concat_cols(Tape& t, std::span<const Var> blocks) {
  if (blocks.empty()) throw ShapeError("concat_cols: no blocks");
  const std::size_t rows = t.value(blocks[0]).rows();
  std::size_t cols = 0;
  for (Var b : blocks) {
    if (t.value(b).rows() != rows) {
      throw ShapeError("concat_cols: row mismatch " + t.value(blocks[0]).shape_str() + " vs " +
                       t.value(b).shape_str());
    }
    cols += t.value(b).cols();
  }
  DenseMatrix out(rows, cols);
  std::size_t c0 = 0;
  for (Var b : blocks) {
    const auto& v = t.value(b);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < v.cols(); ++c) out(r, c0 + c) = v(r, c);
    }
    c0 += v.cols();
  }
  std::vector<Var> parts(blocks.begin(), blocks.end());
  return t.push(std::move(out), any_grad(t, blocks), [parts, rows, cols](Tape& t, std::span<const double> up) {
    std::size_t c0 = 0;
    for (Var b : parts) {
      const std::size_t bc = t.value(b).cols();
      if (auto gb = t.accumulator(b.id); !gb.empty()) {
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t c = 0; c < bc; ++c) gb[r * bc + c] += up[r * cols + c0 + c];
        }
      }
      c0 += bc;
    }
  });
}

Var weighted_row_sum(Tape& t, std::span<const Var> parts, Var weights) {
  if (parts.empty()) throw ShapeError("weighted_row_sum: no parts");
  const auto& w = t.value(weights);
  const std::size_t rows = t.value(parts[0]).rows();
  const std::size_t cols = t.value(parts[0]).cols();
  if (w.rows() != rows || w.cols() != parts.size()) {
    throw ShapeError("weighted_row_sum: weights " + w.shape_str() + " for " + std::to_string(parts.size()) +
                     " parts of " + t.value(parts[0]).shape_str());
  }
  DenseMatrix out(rows, cols);
  for (std::size_t l = 0; l < parts.size(); ++l) {
    const auto& p = t.value(parts[l]);
    if (p.rows() != rows || p.cols() != cols) {
      throw ShapeError("weighted_row_sum: part " + p.shape_str() + " vs " + out.shape_str());
    }
    for (std::size_t r = 0; r < rows; ++r) {
      const double wr = w(r, l);
      auto src = p.row(r);
      auto dst = out.row(r);
      for (std::size_t c = 0; c < cols; ++c) dst[c] += wr * src[c];
    }
  }
  std::vector<Var> ps(parts.begin(), parts.end());
  const bool rg = any_grad(t, parts) || t.requires_grad(weights);
  return t.push(std::move(out), rg, [ps, weights, rows, cols](Tape& t, std::span<const double> up) {
    const auto& w = t.value(weights);
    auto gw = t.accumulator(weights.id);
    for (std::size_t l = 0; l < ps.size(); ++l) {
      const auto& p = t.value(ps[l]);
      auto gp = t.accumulator(ps[l].id);
      for (std::size_t r = 0; r < rows; ++r) {
        const double* u = up.data() + r * cols;
        if (!gp.empty()) {
          const double wr = w(r, l);
          double* g = gp.data() + r * cols;
          for (std::size_t c = 0; c < cols; ++c) g[c] += wr * u[c];
        }
        if (!gw.empty()) {
          auto pr = p.row(r);
          double dot = 0.0;
          for (std::size_t c = 0; c < cols; ++c) dot += pr[c] * u[c];
          gw[r * ps.size() + l] += dot;
        }
      }
    }
  });
}

Var spmm(Tape& t, SpVar a, Var b) {
  DenseMatrix out = spmm(t.value(a), t.value(b));
  const bool rg = t.requires_grad(a) || t.requires_grad(b);
  const std::size_t rows = out.rows(), cols = out.cols();
  return t.push(std::move(out), rg, [a, b, rows, cols](Tape& t, std::span<const double> up) {
    const auto& av = t.value(a);
    if (auto gb = t.accumulator(b.id); !gb.empty()) {
      add_into(gb, spmm_tn(av, as_matrix(up, rows, cols)).values());
    }
    if (auto ga = t.accumulator(a.id); !ga.empty()) {
      const auto& bv = t.value(b);
      for (std::size_t i = 0; i < av.rows(); ++i) {
        const double* u = up.data() + i * cols;
        for (std::size_t k = av.row_ptr()[i]; k < av.row_ptr()[i + 1]; ++k) {
          auto br = bv.row(av.col_idx()[k]);
          double dot = 0.0;
          for (std::size_t j = 0; j < cols; ++j) dot += u[j] * br[j];
          ga[k] += dot;
        }
      }
    }
  });
}

SpVar spspmm(Tape& t, SpVar a, SpVar b, double threshold) {
  const std::size_t self = t.size();
  SparseMatrix out = spspmm(t.value(a), t.value(b), threshold);
  const bool rg = t.requires_grad(a) || t.requires_grad(b);
  return t.push(std::move(out), rg, [a, b, self](Tape& t, std::span<const double> up) {
    const auto& av = t.value(a);
    const auto& bv = t.value(b);
    const auto& cv = t.value(SpVar{self});
    auto ga = t.accumulator(a.id);
    auto gb = t.accumulator(b.id);
    // dA(i,p) = Σ_j dC(i,j) B(p,j);  dB(p,j) += A(i,p) dC(i,j)
    std::vector<double> work(cv.cols(), 0.0);
    for (std::size_t i = 0; i < av.rows(); ++i) {
      const std::size_t c_lo = cv.row_ptr()[i], c_hi = cv.row_ptr()[i + 1];
      if (c_lo == c_hi) continue;
      for (std::size_t k = c_lo; k < c_hi; ++k) work[cv.col_idx()[k]] = up[k];
      for (std::size_t k = av.row_ptr()[i]; k < av.row_ptr()[i + 1]; ++k) {
        const std::size_t p = av.col_idx()[k];
        const double a_ip = av.values()[k];
        double acc = 0.0;
        for (std::size_t q = bv.row_ptr()[p]; q < bv.row_ptr()[p + 1]; ++q) {
          const double dc = work[bv.col_idx()[q]];
          acc += dc * bv.values()[q];
          if (!gb.empty()) gb[q] += a_ip * dc;
        }
        if (!ga.empty()) ga[k] += acc;
      }
      for (std::size_t k = c_lo; k < c_hi; ++k) work[cv.col_idx()[k]] = 0.0;
    }
  });
}

SpVar weighted_sum_sparse(Tape& t, const UnionPattern& pattern, Var w) {
  const auto& wv = t.value(w);
  if (wv.size() != pattern.num_inputs()) {
    throw ShapeError("weighted_sum_sparse: weights " + wv.shape_str() + " for " +
                     std::to_string(pattern.num_inputs()) + " relations");
  }
  std::vector<double> raw(pattern.nnz(), 0.0);
  for (std::size_t m = 0; m < pattern.num_inputs(); ++m) {
    const double wm = wv.values()[m];
    for (std::size_t k = 0; k < pattern.positions[m].size(); ++k) {
      raw[pattern.positions[m][k]] += wm * pattern.values[m][k];
    }
  }
  auto slots = compaction_map(raw);
  SparseMatrix out(pattern.rows, pattern.cols, pattern.row_ptr, pattern.col_idx, std::move(raw));
  const UnionPattern* u = &pattern;
  return t.push(std::move(out), t.requires_grad(w),
                [w, u, slots = std::move(slots)](Tape& t, std::span<const double> up) {
                  auto gw = t.accumulator(w.id);
                  for (std::size_t m = 0; m < u->num_inputs(); ++m) {
                    double acc = 0.0;
                    for (std::size_t k = 0; k < u->positions[m].size(); ++k) {
                      const std::size_t s = slots[u->positions[m][k]];
                      if (s != kNoNode) acc += u->values[m][k] * up[s];
                    }
                    gw[m] += acc;
                  }
                });
}

SpVar masked_row_softmax(Tape& t, SpVar a) {
  const std::size_t self = t.size();
  SparseMatrix out = masked_row_softmax(t.value(a));
  return t.push(std::move(out), t.requires_grad(a), [a, self](Tape& t, std::span<const double> up) {
    const auto& y = t.value(SpVar{self});
    auto ga = t.accumulator(a.id);
    for (std::size_t r = 0; r < y.rows(); ++r) {
      const std::size_t lo = y.row_ptr()[r], hi = y.row_ptr()[r + 1];
      double dot = 0.0;
      for (std::size_t k = lo; k < hi; ++k) dot += y.values()[k] * up[k];
      for (std::size_t k = lo; k < hi; ++k) ga[k] += y.values()[k] * (up[k] - dot);
    }
  });
}

SpVar normalize_rows(Tape& t, SpVar a) {
  const auto& av = t.value(a);
  const auto sums = row_sums(av);
  std::vector<double> raw(av.nnz());
  for (std::size_t r = 0; r < av.rows(); ++r) {
    const double inv = sums[r] == 0.0 ? 0.0 : 1.0 / sums[r];
    for (std::size_t k = av.row_ptr()[r]; k < av.row_ptr()[r + 1]; ++k) raw[k] = av.values()[k] * inv;
  }
  auto slots = compaction_map(raw);
  SparseMatrix out = av.with_values(std::move(raw));
  return t.push(std::move(out), t.requires_grad(a),
                [a, sums, slots = std::move(slots)](Tape& t, std::span<const double> up) {
                  // y = a / s  =>  da_k = (dy_k - Σ_row dy·y) / s
                  const auto& av = t.value(a);
                  auto ga = t.accumulator(a.id);
                  for (std::size_t r = 0; r < av.rows(); ++r) {
                    if (sums[r] == 0.0) continue;
                    const double inv = 1.0 / sums[r];
                    const std::size_t lo = av.row_ptr()[r], hi = av.row_ptr()[r + 1];
                    double dot = 0.0;
                    for (std::size_t k = lo; k < hi; ++k) {
                      if (slots[k] != kNoNode) dot += up[slots[k]] * av.values()[k] * inv;
                    }
                    for (std::size_t k = lo; k < hi; ++k) {
                      const double dy = slots[k] != kNoNode ? up[slots[k]] : 0.0;
                      ga[k] += (dy - dot) * inv;
                    }
                  }
                });
}

Var cross_entropy(Tape& t, Var logits, std::span<const int> labels,
                  std::span<const std::size_t> rows) {
  const double loss = cross_entropy(t.value(logits), labels, rows);
  std::vector<int> y(labels.begin(), labels.end());
  std::vector<std::size_t> mask(rows.begin(), rows.end());
  return t.push(DenseMatrix(1, 1, loss), t.requires_grad(logits),
                [logits, y = std::move(y), mask = std::move(mask)](Tape& t, std::span<const double> up) {
                  const auto& z = t.value(logits);
                  auto g = t.accumulator(logits.id);
                  const double scale = up[0] / static_cast<double>(mask.size());
                  const std::size_t c = z.cols();
                  for (std::size_t r : mask) {
                    auto zr = z.row(r);
                    const double mx = *std::max_element(zr.begin(), zr.end());
                    double s = 0.0;
                    for (double v : zr) s += std::exp(v - mx);
                    for (std::size_t j = 0; j < c; ++j) {
                      const double p = std::exp(zr[j] - mx) / s;
                      const double target = static_cast<std::size_t>(y[r]) == j ? 1.0 : 0.0;
                      g[r * c + j] += scale * (p - target);
                    }
                  }
                });
}

}  // namespace mhnf::nd
