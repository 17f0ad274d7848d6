// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mhnf/graph/hetgraph.hpp"
#include "mhnf/model/hmae.hpp"
#include "mhnf/model/params.hpp"
#include "mhnf/nd/kernels.hpp"
#include "mhnf/nd/tape.hpp"

namespace mhnf::train {

using model::ParamStore;
using nd::DenseMatrix;

struct TrainConfig {
  double lr = 0.05;
  double weight_decay = 0.001;
  std::size_t paths = 2;  // C
  std::size_t hops = 2;   // L
  std::size_t dim = 64;
  std::size_t attn_dim = 128;
  std::size_t epochs = 200;
  std::size_t patience = 30;
  std::uint64_t seed = 0;
  std::size_t runs = 10;
  std::vector<double> ratios{0.2};
  double val_ratio = 0.1;
  std::size_t knn_k = 5;
  std::size_t kmeans_restarts = 10;
  double mixer_init = 1.0;
  double embed_std = 0.1;
  /// When non-empty: one relation index per hop for each path; those mixers
  /// are fixed one-hot and not trained.
  std::vector<std::vector<std::size_t>> fixed_paths;

  /// Throws std::invalid_argument for unusable values.
  void validate() const;
  /// Non-fatal remarks (e.g. an unusual path count).
  std::vector<std::string> warnings() const;
};

std::string mixer_name(std::size_t path, std::size_t hop);

/// Fresh parameters; every tensor draws from its own stream of `seed`.
ParamStore init_params(const graph::HetGraph& g, const TrainConfig& cfg, std::uint64_t seed);
/// Names of tensors that stay constant during training.
std::vector<std::string> frozen_params(const TrainConfig& cfg);
model::PathMixerParams mixer_of(const ParamStore& params, const TrainConfig& cfg);

/// Graph plus precomputed, read-only state shared by all forward passes.
class Model {
 public:
  Model(const graph::HetGraph& g, TrainConfig cfg);
  const graph::HetGraph& graph() const { return *graph_; }
  const TrainConfig& config() const { return config_; }
  const nd::UnionPattern& pattern() const { return pattern_; }
  const std::vector<std::size_t>& target_nodes() const { return targets_; }

 private:
  const graph::HetGraph* graph_;
  TrainConfig config_;
  nd::UnionPattern pattern_;
  std::vector<std::size_t> targets_;
};

struct ForwardVars {
  nd::Var z, logits;
  std::vector<std::vector<nd::Var>> hop_z;  // [path][hop 0..L]
  std::vector<nd::Var> path_z;
  std::vector<nd::Var> hop_weights;  // per path, N x (L + 1)
  nd::Var path_weights;              // N x C
};

ForwardVars forward(nd::Tape& t, const Model& m, const model::ParamVars& v);

struct AttentionRecord {
  std::vector<std::vector<double>> hop_betas;  // [path][hop], mean over target nodes
  std::vector<double> path_betas;
  std::vector<DenseMatrix> hop_beta_nodes;  // per path, N x (L + 1)
  DenseMatrix path_beta_nodes;              // N x C
};

struct ForwardResult {
  DenseMatrix z, logits;
  std::vector<std::vector<DenseMatrix>> hop_z;
  AttentionRecord attention;
};

/// Gradient-free forward pass.
ForwardResult evaluate_forward(const Model& m, const ParamStore& params);

struct EpochStats {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_macro_f1 = 0.0;
};

struct FitResult {
  ParamStore params;  // best-validation parameters
  std::vector<EpochStats> curve;
  std::size_t best_epoch = 0;
  double best_val_f1 = -1.0;
};

/// Full-batch Adam training with early stopping on validation Macro-F1.
FitResult fit(const Model& m, const graph::LabeledSplit& split, std::uint64_t seed);

struct Metrics {
  double macro_f1 = 0.0, micro_f1 = 0.0;
  double macro_f1_knn = 0.0, micro_f1_knn = 0.0;
  double nmi = 0.0, ari = 0.0;

  friend bool operator==(const Metrics&, const Metrics&) = default;
};
std::map<std::string, double> metric_map(const Metrics& m);

std::vector<int> argmax_rows(const DenseMatrix& logits, std::span<const std::size_t> rows);

/// Test-set head and KNN F1, plus k-means NMI/ARI over labeled target nodes.
Metrics evaluate(const Model& m, const ForwardResult& fr, const graph::LabeledSplit& split, std::uint64_t seed);
Metrics evaluate(const Model& m, const ParamStore& params, const graph::LabeledSplit& split, std::uint64_t seed);

/// Clustering NMI of each hop embedding Z_l of each path.
std::vector<std::vector<double>> per_hop_nmi(const Model& m, const ForwardResult& fr, std::uint64_t seed);

struct RunResult {
  double ratio = 0.0;
  std::size_t run = 0;
  std::uint64_t seed = 0;
  graph::LabeledSplit split;
  FitResult fit;
  Metrics metrics;
  AttentionRecord attention;
};

struct Summary {
  double mean = 0.0, std = 0.0;  // population standard deviation
};

struct RatioBlock {
  double ratio = 0.0;
  std::vector<RunResult> runs;
  std::map<std::string, Summary> summary;
};

struct ProtocolReport {
  std::vector<RatioBlock> blocks;
};

/// Seed of run `r` under the configured root seed.
std::uint64_t run_seed(const TrainConfig& cfg, std::size_t r);
RunResult run_once(const Model& m, double ratio, std::size_t r);
/// `runs` seeded runs per ratio; runs execute on up to `threads` workers and
/// are merged in (ratio, run) order.
ProtocolReport run_protocol(const graph::HetGraph& g, const TrainConfig& cfg, std::size_t threads = 1);

/// Worker count from MHNF_THREADS (default 1).
std::size_t thread_budget();

}  // namespace mhnf::train
