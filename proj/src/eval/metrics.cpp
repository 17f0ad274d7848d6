// SPDX-License-Identifier: Apache-2.0
#include "mhnf/eval/metrics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <stdexcept>

#include "mhnf/error.hpp"
#include "mhnf/rng.hpp"

namespace mhnf::eval {

namespace {

void require_pair(std::span<const int> a, std::span<const int> b, const char* what) {
  if (a.empty()) throw std::invalid_argument(std::string(what) + ": empty input");
  if (a.size() != b.size()) throw ShapeError(std::string(what) + ": length mismatch");
}

double sq_dist(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double d = a[j] - b[j];
    s += d * d;
  }
  return s;
}

double entropy(const std::map<int, std::size_t>& counts, double n) {
  double h = 0.0;
  for (auto [label, c] : counts) {
    const double p = static_cast<double>(c) / n;
    h -= p * std::log(p);
  }
  return h;
}

double choose2(double x) { return x * (x - 1.0) / 2.0; }

}  // namespace

F1 f1_scores(std::span<const int> pred, std::span<const int> truth) {
  require_pair(pred, truth, "f1_scores");
  std::map<int, std::array<std::size_t, 3>> counts;  // tp, fp, fn
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] == truth[i]) {
      ++counts[pred[i]][0];
    } else {
      ++counts[pred[i]][1];
      ++counts[truth[i]][2];
    }
  }
  double macro = 0.0, tp = 0.0, fp = 0.0, fn = 0.0;
  for (const auto& [cls, c] : counts) {
    const double denom = 2.0 * static_cast<double>(c[0]) + static_cast<double>(c[1] + c[2]);
    macro += denom > 0 ? 2.0 * static_cast<double>(c[0]) / denom : 0.0;
    tp += static_cast<double>(c[0]);
    fp += static_cast<double>(c[1]);
    fn += static_cast<double>(c[2]);
  }
  return {macro / static_cast<double>(counts.size()), 2.0 * tp / (2.0 * tp + fp + fn)};
}

std::vector<int> knn_predict(const DenseMatrix& train, std::span<const int> train_labels, const DenseMatrix& test,
                             std::size_t k) {
  if (train.rows() == 0) throw std::invalid_argument("knn_predict: empty train set");
  if (train_labels.size() != train.rows()) throw ShapeError("knn_predict: one label per train row required");
  if (train.cols() != test.cols()) throw ShapeError("knn_predict: train and test widths differ");
  if (k == 0 || k > train.rows()) throw std::invalid_argument("knn_predict: k must be in [1, |train|]");
  std::vector<int> out(test.rows());
  std::vector<std::pair<double, std::size_t>> dist(train.rows());
  for (std::size_t i = 0; i < test.rows(); ++i) {
    for (std::size_t j = 0; j < train.rows(); ++j) dist[j] = {sq_dist(test.row(i), train.row(j)), j};
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
    std::map<int, std::size_t> votes;
    for (std::size_t q = 0; q < k; ++q) ++votes[train_labels[dist[q].second]];
    int best = votes.begin()->first;
    std::size_t best_votes = 0;
    for (auto [cls, v] : votes) {
      if (v > best_votes) {
        best = cls;
        best_votes = v;
      }
    }
    out[i] = best;
  }
  return out;
}

namespace {

struct Lloyd {
  std::vector<int> assignment;
  DenseMatrix centroids;
  double inertia;
  std::vector<double> trace;
};

Lloyd run_lloyd(const DenseMatrix& x, std::size_t k, Rng& rng, std::size_t max_iter) {
  const std::size_t n = x.rows(), d = x.cols();
  DenseMatrix c(k, d);
  // k-means++ seeding
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  std::size_t pick = rng.below(n);
  for (std::size_t q = 0; q < k; ++q) {
    std::copy(x.row(pick).begin(), x.row(pick).end(), c.row(q).begin());
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      nearest[i] = std::min(nearest[i], sq_dist(x.row(i), c.row(q)));
      total += nearest[i];
    }
    if (q + 1 == k) break;
    if (total <= 0.0) {
      pick = rng.below(n);
      continue;
    }
    double r = rng.uniform() * total;
    pick = n - 1;
    for (std::size_t i = 0; i < n; ++i) {
      r -= nearest[i];
      if (r < 0.0 && nearest[i] > 0.0) {
        pick = i;
        break;
      }
    }
  }

  std::vector<int> assign(n, -1);
  std::vector<double> trace;
  std::vector<double> dist(n);
  for (std::size_t iter = 0; iter < max_iter; ++iter) {
    bool changed = false;
    double inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      int best = 0;
      double bd = std::numeric_limits<double>::infinity();
      for (std::size_t q = 0; q < k; ++q) {
        const double dd = sq_dist(x.row(i), c.row(q));
        if (dd < bd) {
          bd = dd;
          best = static_cast<int>(q);
        }
      }
      changed = changed || assign[i] != best;
      assign[i] = best;
      dist[i] = bd;
      inertia += bd;
    }
    trace.push_back(inertia);
    if (!changed && iter > 0) break;

    DenseMatrix sum(k, d);
    std::vector<std::size_t> size(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto q = static_cast<std::size_t>(assign[i]);
      ++size[q];
      for (std::size_t j = 0; j < d; ++j) sum(q, j) += x(i, j);
    }
    for (std::size_t q = 0; q < k; ++q) {
      if (size[q] == 0) {
        // reseed an empty cluster at the point farthest from its centroid
        const auto far = static_cast<std::size_t>(std::max_element(dist.begin(), dist.end()) - dist.begin());
        std::copy(x.row(far).begin(), x.row(far).end(), c.row(q).begin());
        dist[far] = 0.0;
        continue;
      }
      for (std::size_t j = 0; j < d; ++j) c(q, j) = sum(q, j) / static_cast<double>(size[q]);
    }
  }
  double inertia = 0.0;
  for (std::size_t i = 0; i < n; ++i) inertia += sq_dist(x.row(i), c.row(static_cast<std::size_t>(assign[i])));
  return {std::move(assign), std::move(c), inertia, std::move(trace)};
}

}  // namespace

KMeansResult kmeans(const DenseMatrix& x, std::size_t k, std::uint64_t seed, std::size_t restarts,
                    std::size_t max_iter) {
  if (k == 0) throw std::invalid_argument("kmeans: k must be >= 1");
  if (k > x.rows()) {
    throw std::invalid_argument("kmeans: k = " + std::to_string(k) + " exceeds " + std::to_string(x.rows()) +
                                " rows");
  }
  KMeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < std::max<std::size_t>(restarts, 1); ++r) {
    Rng rng(stream_seed(seed, "kmeans", r));
    auto run = run_lloyd(x, k, rng, max_iter);
    if (run.inertia < best.inertia) {
      best = {std::move(run.assignment), std::move(run.centroids), run.inertia, std::move(run.trace), r};
    }
  }
  return best;
}

double nmi(std::span<const int> a, std::span<const int> b) {
  require_pair(a, b, "nmi");
  const double n = static_cast<double>(a.size());
  std::map<int, std::size_t> ca, cb;
  std::map<std::pair<int, int>, std::size_t> joint;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ++ca[a[i]];
    ++cb[b[i]];
    ++joint[{a[i], b[i]}];
  }
  const double ha = entropy(ca, n), hb = entropy(cb, n);
  if (ha == 0.0 && hb == 0.0) return 1.0;
  if (ha == 0.0 || hb == 0.0) return 0.0;
  double mi = 0.0;
  for (auto [key, c] : joint) {
    const double nij = static_cast<double>(c);
    mi += nij / n * std::log(n * nij / (static_cast<double>(ca[key.first]) * static_cast<double>(cb[key.second])));
  }
  return std::clamp(mi / (0.5 * (ha + hb)), 0.0, 1.0);
}

double ari(std::span<const int> a, std::span<const int> b) {
  require_pair(a, b, "ari");
  std::map<int, std::size_t> ca, cb;
  std::map<std::pair<int, int>, std::size_t> joint;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ++ca[a[i]];
    ++cb[b[i]];
    ++joint[{a[i], b[i]}];
  }
  double index = 0.0, sa = 0.0, sb = 0.0;
  for (auto [key, c] : joint) index += choose2(static_cast<double>(c));
  for (auto [key, c] : ca) sa += choose2(static_cast<double>(c));
  for (auto [key, c] : cb) sb += choose2(static_cast<double>(c));
  const double pairs = choose2(static_cast<double>(a.size()));
  if (pairs == 0.0) return 1.0;
  const double expected = sa * sb / pairs;
  const double max_index = 0.5 * (sa + sb);
  if (max_index == expected) return 1.0;
  return (index - expected) / (max_index - expected);
}

DenseMatrix pca2d(const DenseMatrix& z) {
  const std::size_t n = z.rows(), d = z.cols();
  DenseMatrix out(n, 2);
  if (n == 0 || d == 0) return out;
  Eigen::MatrixXd x(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = z(i, j);
  }
  const Eigen::RowVectorXd mean = x.colwise().mean();
  x.rowwise() -= mean;
  const Eigen::MatrixXd cov = (x.transpose() * x) / std::max<double>(1.0, static_cast<double>(n) - 1.0);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  const auto& vecs = solver.eigenvectors();  // ascending eigenvalues
  for (std::size_t c = 0; c < std::min<std::size_t>(2, d); ++c) {
    Eigen::VectorXd v = vecs.col(static_cast<Eigen::Index>(d - 1 - c));
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    const Eigen::VectorXd proj = x * v;
    for (std::size_t i = 0; i < n; ++i) out(i, c) = proj(static_cast<Eigen::Index>(i));
  }
  return out;
}

void export_embeddings(const std::filesystem::path& path, const DenseMatrix& z, std::span<const std::size_t> nodes,
                       std::span<const int> labels) {
  if (nodes.size() != z.rows() || labels.size() != z.rows()) {
    throw ShapeError("export_embeddings: one node id and label per row required");
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error(path.string() + ": cannot write embeddings");
  out.precision(17);
  out << "node\tlabel";
  for (std::size_t j = 0; j < z.cols(); ++j) out << "\tx" << j;
  out << '\n';
  for (std::size_t i = 0; i < z.rows(); ++i) {
    out << nodes[i] << '\t' << std::max(labels[i], -1);
    for (double v : z.row(i)) out << '\t' << v;
    out << '\n';
  }
  if (!out) throw std::runtime_error(path.string() + ": write failed");
}

DenseMatrix gather_rows(const DenseMatrix& m, std::span<const std::size_t> rows) {
  DenseMatrix out(rows.size(), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) std::copy(m.row(rows[i]).begin(), m.row(rows[i]).end(), out.row(i).begin());
  return out;
}

}  // namespace mhnf::eval
