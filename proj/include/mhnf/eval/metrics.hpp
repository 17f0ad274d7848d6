// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "mhnf/nd/dense_matrix.hpp"

namespace mhnf::eval {

using nd::DenseMatrix;

struct F1 {
  double macro = 0.0;
  double micro = 0.0;
};

/// Macro F1 averages over classes present in pred or truth; micro pools counts.
F1 f1_scores(std::span<const int> pred, std::span<const int> truth);

/// k-nearest-neighbour vote under Euclidean distance. Equal distances go to the
/// lower train row; tied votes go to the smaller class.
std::vector<int> knn_predict(const DenseMatrix& train, std::span<const int> train_labels, const DenseMatrix& test,
                             std::size_t k = 5);

struct KMeansResult {
  std::vector<int> assignment;
  DenseMatrix centroids;
  double inertia = 0.0;
  std::vector<double> inertia_trace;  // per Lloyd iteration of the chosen restart
  std::size_t restart = 0;
};

/// Lloyd's algorithm with k-means++ seeding; keeps the lowest-inertia restart.
KMeansResult kmeans(const DenseMatrix& x, std::size_t k, std::uint64_t seed, std::size_t restarts = 10,
                    std::size_t max_iter = 300);

/// Mutual information over the arithmetic mean of the two entropies.
double nmi(std::span<const int> a, std::span<const int> b);
double ari(std::span<const int> a, std::span<const int> b);

/// Projection onto the top two principal axes (N x 2).
DenseMatrix pca2d(const DenseMatrix& z);

/// Writes "node<TAB>label<TAB>x0..." rows; labels < 0 are written as -1.
void export_embeddings(const std::filesystem::path& path, const DenseMatrix& z, std::span<const std::size_t> nodes,
                       std::span<const int> labels);

/// Rows `rows` of m, in order.
DenseMatrix gather_rows(const DenseMatrix& m, std::span<const std::size_t> rows);

}  // namespace mhnf::eval
