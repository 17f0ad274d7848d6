// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mhnf/nd/dense_matrix.hpp"
#include "mhnf/nd/sparse_matrix.hpp"

namespace mhnf::graph {

using nd::DenseMatrix;
using nd::SparseMatrix;

struct NodeType {
  std::string name;
  std::size_t count = 0;
  std::size_t offset = 0;  // first global index

  friend bool operator==(const NodeType&, const NodeType&) = default;
};

/// Ordered node types; type k owns global indices [offset, offset + count).
class NodeTypeTable {
 public:
  /// Appends a type after all existing ones. Throws DataError on a duplicate name.
  std::size_t add(std::string name, std::size_t count);

  const std::vector<NodeType>& types() const { return types_; }
  std::size_t size() const { return types_.size(); }
  const NodeType& operator[](std::size_t k) const { return types_.at(k); }
  std::optional<std::size_t> find(const std::string& name) const;
  /// Like find, but throws DataError for unknown names.
  std::size_t index_of(const std::string& name) const;
  std::size_t total() const { return total_; }
  std::size_t type_of(std::size_t global) const;

  friend bool operator==(const NodeTypeTable&, const NodeTypeTable&) = default;

 private:
  std::vector<NodeType> types_;
  std::size_t total_ = 0;
};

struct RelationSpec {
  std::string name;
  std::size_t src = 0;  // node type index
  std::size_t dst = 0;

  friend bool operator==(const RelationSpec&, const RelationSpec&) = default;
};

struct Relation {
  RelationSpec spec;
  SparseMatrix matrix;  // N_total x N_total
  std::optional<std::size_t> reverse;  // index of the transposed relation
  bool derived = false;                 // added as a transpose, not declared
};

/// Edge list of one declared relation, in type-local ids.
struct EdgeList {
  RelationSpec spec;
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  std::string origin;  // used in diagnostics
};

class HetGraph {
 public:
  NodeTypeTable types;
  std::vector<Relation> relations;
  std::vector<std::optional<DenseMatrix>> features;  // per type
  std::size_t target_type = 0;
  std::vector<int> labels;  // per global node, -1 when unlabeled
  int num_classes = 0;

  std::size_t num_nodes() const { return types.total(); }
  std::size_t num_relations() const { return relations.size(); }
  std::vector<SparseMatrix> relation_matrices() const;
  std::vector<std::string> relation_names() const;
  std::optional<std::size_t> find_relation(const std::string& name) const;
  /// Global indices of labeled target-type nodes, ascending.
  std::vector<std::size_t> labeled_nodes() const;
  std::vector<std::size_t> target_nodes() const;

  /// Checks block discipline, transpose closure, label and feature shapes.
  void validate() const;
};

/// Name given to the automatically added reverse of `name`: two-letter
/// relation names are mirrored (PA -> AP), others get a "_rev" suffix.
std::string reverse_name(const std::string& name);

/// Assembles and validates a graph. Duplicate edges collapse to weight 1,
/// and every relation between two distinct types gets its transpose added
/// directly after it unless a declared relation already plays that role.
HetGraph build_graph(NodeTypeTable types, const std::vector<EdgeList>& edge_lists,
                     std::vector<std::optional<DenseMatrix>> features, std::size_t target_type,
                     const std::vector<std::pair<std::size_t, int>>& labels);

/// Reads schema.txt, <relation>.edges, optional <type>.features and labels.txt.
HetGraph load_graph(const std::filesystem::path& dir);

/// Writes a graph in the format read by load_graph (declared relations only).
void save_graph(const HetGraph& g, const std::filesystem::path& dir);

struct PlantedConfig {
  std::uint64_t seed = 0;
  std::size_t n_per_class = 150;
  int classes = 3;
  double noise = 0.1;
  std::size_t hubs_per_class = 3;
  std::size_t hub_degree = 2;  // signal edges per target node
  std::size_t noise_degree = 2;
  /// 2 adds a second class-correlated relation to a separate hub type W.
  int signal_relations = 1;
};

/// Planted-signal benchmark: target type T, class hubs U (relation R_signal),
/// uninformative V nodes (relation R_noise). With probability `noise` each
/// signal edge is rewired to a random hub; T features are one-hot class plus
/// Gaussian noise of scale `noise`.
HetGraph synth_planted(const PlantedConfig& cfg);

struct LabeledSplit {
  std::vector<std::size_t> train, val, test;  // global node indices, ascending
  std::uint64_t seed = 0;
};

/// Class-stratified split of labeled target nodes.
LabeledSplit split_nodes(const HetGraph& g, double train_ratio, double val_ratio, std::uint64_t seed);

/// 1 / row sum per row, 0 for empty rows.
std::vector<double> degree_inverse(const SparseMatrix& a);

}  // namespace mhnf::graph
