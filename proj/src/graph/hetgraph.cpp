// SPDX-License-Identifier: Apache-2.0
#include "mhnf/graph/hetgraph.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "mhnf/error.hpp"
#include "mhnf/rng.hpp"

namespace mhnf::graph {

using nd::Index;
using nd::Triplet;

std::size_t NodeTypeTable::add(std::string name, std::size_t count) {
  if (find(name)) throw DataError("duplicate node type '" + name + "'");
  types_.push_back({std::move(name), count, total_});
  total_ += count;
  return types_.size() - 1;
}

std::optional<std::size_t> NodeTypeTable::find(const std::string& name) const {
  for (std::size_t k = 0; k < types_.size(); ++k) {
    if (types_[k].name == name) return k;
  }
  return std::nullopt;
}

std::size_t NodeTypeTable::index_of(const std::string& name) const {
  auto k = find(name);
  if (!k) throw DataError("unknown node type '" + name + "'");
  return *k;
}

std::size_t NodeTypeTable::type_of(std::size_t global) const {
  for (std::size_t k = 0; k < types_.size(); ++k) {
    if (global < types_[k].offset + types_[k].count) return k;
  }
  throw DataError("global node index " + std::to_string(global) + " out of range");
}

std::vector<SparseMatrix> HetGraph::relation_matrices() const {
  std::vector<SparseMatrix> out;
  out.reserve(relations.size());
  for (const auto& r : relations) out.push_back(r.matrix);
  return out;
}

std::vector<std::string> HetGraph::relation_names() const {
  std::vector<std::string> out;
  for (const auto& r : relations) out.push_back(r.spec.name);
  return out;
}

std::optional<std::size_t> HetGraph::find_relation(const std::string& name) const {
  for (std::size_t m = 0; m < relations.size(); ++m) {
    if (relations[m].spec.name == name) return m;
  }
  return std::nullopt;
}

std::vector<std::size_t> HetGraph::labeled_nodes() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= 0) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> HetGraph::target_nodes() const {
  const auto& t = types[target_type];
  std::vector<std::size_t> out(t.count);
  for (std::size_t i = 0; i < t.count; ++i) out[i] = t.offset + i;
  return out;
}

void HetGraph::validate() const {
  const std::size_t n = num_nodes();
  std::set<std::string> names;
  for (std::size_t m = 0; m < relations.size(); ++m) {
    const auto& r = relations[m];
    if (!names.insert(r.spec.name).second) throw DataError("duplicate relation name '" + r.spec.name + "'");
    if (r.spec.src >= types.size() || r.spec.dst >= types.size()) {
      throw DataError("relation '" + r.spec.name + "' references an unknown node type");
    }
    if (r.matrix.rows() != n || r.matrix.cols() != n) {
      throw DataError("relation '" + r.spec.name + "' matrix is not " + nd::shape_str(n, n));
    }
    if (r.matrix.nnz() == 0) throw DataError("relation '" + r.spec.name + "' has zero edges");
    const auto& s = types[r.spec.src];
    const auto& d = types[r.spec.dst];
    for (std::size_t i = 0; i < n; ++i) {
      const auto cols = r.matrix.row_cols(i);
      if (cols.empty()) continue;
      if (i < s.offset || i >= s.offset + s.count || cols.front() < d.offset ||
          cols.back() >= d.offset + d.count) {
        throw DataError("relation '" + r.spec.name + "' has an edge outside its " + s.name + "-" + d.name +
                        " block");
      }
    }
    if (r.spec.src != r.spec.dst) {
      if (!r.reverse) throw DataError("relation '" + r.spec.name + "' has no reverse relation");
      const auto& rev = relations.at(*r.reverse);
      if (rev.spec.src != r.spec.dst || rev.spec.dst != r.spec.src || !(rev.matrix == r.matrix.transpose())) {
        throw DataError("relation '" + rev.spec.name + "' is not the transpose of '" + r.spec.name + "'");
      }
    }
  }

  if (features.size() != types.size()) throw DataError("feature table count does not match node types");
  for (std::size_t k = 0; k < types.size(); ++k) {
    if (!features[k]) continue;
    if (features[k]->rows() != types[k].count) {
      throw DataError("features of type '" + types[k].name + "' have " + std::to_string(features[k]->rows()) +
                      " rows, expected " + std::to_string(types[k].count));
    }
    if (!features[k]->all_finite()) throw DataError("features of type '" + types[k].name + "' are not finite");
  }

  if (target_type >= types.size()) throw DataError("target type out of range");
  if (labels.size() != n) throw DataError("label vector does not cover all nodes");
  std::vector<bool> seen(static_cast<std::size_t>(std::max(num_classes, 0)), false);
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0) continue;
    if (types.type_of(i) != target_type) throw DataError("label on non-target node " + std::to_string(i));
    if (labels[i] >= num_classes) throw DataError("class index out of range at node " + std::to_string(i));
    seen[static_cast<std::size_t>(labels[i])] = true;
  }
  for (int c = 0; c < num_classes; ++c) {
    if (!seen[static_cast<std::size_t>(c)]) {
      throw DataError("class indices are not dense: class " + std::to_string(c) + " has no labeled node");
    }
  }
}

std::string reverse_name(const std::string& name) {
  if (name.size() == 2) return {name[1], name[0]};
  return name + "_rev";
}

HetGraph build_graph(NodeTypeTable types, const std::vector<EdgeList>& edge_lists,
                     std::vector<std::optional<DenseMatrix>> features, std::size_t target_type,
                     const std::vector<std::pair<std::size_t, int>>& labels) {
  HetGraph g;
  g.types = std::move(types);
  g.features = std::move(features);
  g.features.resize(g.types.size());
  g.target_type = target_type;
  const std::size_t n = g.types.total();

  auto declared = [&](const std::string& name) -> const EdgeList* {
    for (const auto& e : edge_lists) {
      if (e.spec.name == name) return &e;
    }
    return nullptr;
  };

  auto to_matrix = [&](const EdgeList& e) {
    const auto& s = g.types[e.spec.src];
    const auto& d = g.types[e.spec.dst];
    std::vector<Triplet> t;
    t.reserve(e.edges.size());
    for (auto [a, b] : e.edges) {
      if (a >= s.count || b >= d.count) {
        throw DataError(e.origin + ": unknown node id in relation '" + e.spec.name + "'");
      }
      t.push_back({static_cast<Index>(s.offset + a), static_cast<Index>(d.offset + b), 1.0});
    }
    if (t.empty()) throw DataError(e.origin + ": relation has zero edges");
    return SparseMatrix::from_triplets(n, n, t, nd::Duplicates::kKeepOne);
  };

  for (const auto& e : edge_lists) {
    if (g.find_relation(e.spec.name)) continue;  // already placed as a reverse
    g.relations.push_back({e.spec, to_matrix(e), std::nullopt, false});
    const std::size_t fwd = g.relations.size() - 1;
    if (e.spec.src == e.spec.dst) continue;
    const std::string rname = reverse_name(e.spec.name);
    if (const EdgeList* r = declared(rname)) {
      if (r->spec.src != e.spec.dst || r->spec.dst != e.spec.src) {
        throw DataError("relation '" + rname + "' clashes with the reverse of '" + e.spec.name + "'");
      }
      g.relations.push_back({r->spec, to_matrix(*r), fwd, false});
    } else {
      g.relations.push_back(
          {{rname, e.spec.dst, e.spec.src}, g.relations[fwd].matrix.transpose(), fwd, true});
    }
    g.relations[fwd].reverse = g.relations.size() - 1;
  }

  g.labels.assign(n, -1);
  const auto& t = g.types[target_type];
  for (auto [local, cls] : labels) {
    if (local >= t.count) throw DataError("label for unknown node id " + std::to_string(local));
    if (cls < 0) throw DataError("negative class index for node " + std::to_string(local));
    g.labels[t.offset + local] = cls;
    g.num_classes = std::max(g.num_classes, cls + 1);
  }
  g.validate();
  return g;
}

std::vector<double> degree_inverse(const SparseMatrix& a) {
  std::vector<double> out(a.rows(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double s = 0.0;
    for (double v : a.row_values(i)) s += v;
    if (s < 0.0) throw NumericError("degree_inverse: negative row sum at row " + std::to_string(i));
    if (s > 0.0) out[i] = 1.0 / s;
  }
  return out;
}

namespace {

// Largest-remainder apportionment of round(ratio * Σ sizes) over groups.
std::vector<std::size_t> apportion(const std::vector<std::size_t>& sizes, double ratio) {
  std::size_t total = 0;
  for (auto s : sizes) total += s;
  const auto want = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(total)));
  std::vector<std::size_t> out(sizes.size());
  std::vector<std::pair<double, std::size_t>> rem;
  std::size_t given = 0;
  for (std::size_t c = 0; c < sizes.size(); ++c) {
    const double q = ratio * static_cast<double>(sizes[c]);
    out[c] = static_cast<std::size_t>(std::floor(q));
    given += out[c];
    rem.push_back({q - std::floor(q), c});
  }
  std::stable_sort(rem.begin(), rem.end(), [](auto& a, auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; given < want && k < rem.size(); ++k, ++given) ++out[rem[k].second];
  return out;
}

}  // namespace

LabeledSplit split_nodes(const HetGraph& g, double train_ratio, double val_ratio, std::uint64_t seed) {
  if (!(train_ratio > 0.0) || !(val_ratio > 0.0) || !(train_ratio + val_ratio < 1.0)) {
    throw std::invalid_argument("split ratios must be positive with train + val < 1");
  }
  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(g.num_classes));
  for (std::size_t i : g.labeled_nodes()) by_class[static_cast<std::size_t>(g.labels[i])].push_back(i);
  std::vector<std::size_t> sizes;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    if (by_class[c].size() < 3) {
      throw DataError("class " + std::to_string(c) + " has " + std::to_string(by_class[c].size()) +
                      " labeled nodes; at least 3 are needed to stratify");
    }
    sizes.push_back(by_class[c].size());
  }
  const auto n_train = apportion(sizes, train_ratio);
  const auto n_val = apportion(sizes, val_ratio);

  LabeledSplit s;
  s.seed = seed;
  Rng rng(stream_seed(seed, "split"));
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto nodes = by_class[c];
    rng.shuffle(nodes.begin(), nodes.end());
    const std::size_t a = n_train[c];
    const std::size_t b = std::min(a + n_val[c], nodes.size());
    s.train.insert(s.train.end(), nodes.begin(), nodes.begin() + static_cast<std::ptrdiff_t>(a));
    s.val.insert(s.val.end(), nodes.begin() + static_cast<std::ptrdiff_t>(a),
                 nodes.begin() + static_cast<std::ptrdiff_t>(b));
    s.test.insert(s.test.end(), nodes.begin() + static_cast<std::ptrdiff_t>(b), nodes.end());
  }
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.val.begin(), s.val.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

HetGraph synth_planted(const PlantedConfig& cfg) {
  if (cfg.classes < 2) throw std::invalid_argument("synth_planted: classes must be >= 2");
  if (cfg.n_per_class == 0 || cfg.hubs_per_class == 0) throw std::invalid_argument("synth_planted: empty node type");
  if (cfg.hub_degree == 0 || cfg.hub_degree > cfg.hubs_per_class) {
    throw std::invalid_argument("synth_planted: hub_degree must be in [1, hubs_per_class]");
  }
  if (cfg.signal_relations != 1 && cfg.signal_relations != 2) {
    throw std::invalid_argument("synth_planted: signal_relations must be 1 or 2");
  }
  if (!(cfg.noise >= 0.0 && cfg.noise <= 1.0)) throw std::invalid_argument("synth_planted: noise must be in [0, 1]");

  const auto k = static_cast<std::size_t>(cfg.classes);
  const std::size_t n_t = k * cfg.n_per_class;
  const std::size_t n_hubs = k * cfg.hubs_per_class;
  NodeTypeTable types;
  const auto t = types.add("T", n_t);
  const auto u = types.add("U", n_hubs);
  const auto v = types.add("V", cfg.n_per_class);
  std::optional<std::size_t> w;
  if (cfg.signal_relations == 2) w = types.add("W", n_hubs);

  Rng rng(stream_seed(cfg.seed, "synth"));
  auto signal_edges = [&](std::size_t dst_type, const std::string& name) {
    EdgeList e{{name, t, dst_type}, {}, "synthetic " + name};
    std::vector<std::size_t> hubs(cfg.hubs_per_class);
    for (std::size_t i = 0; i < n_t; ++i) {
      const std::size_t c = i % k;
      for (std::size_t h = 0; h < hubs.size(); ++h) hubs[h] = c * cfg.hubs_per_class + h;
      rng.shuffle(hubs.begin(), hubs.end());
      for (std::size_t q = 0; q < cfg.hub_degree; ++q) {
        std::size_t hub = hubs[q];
        if (rng.uniform() < cfg.noise) hub = rng.below(n_hubs);
        e.edges.push_back({i, hub});
      }
    }
    return e;
  };

  std::vector<EdgeList> lists;
  lists.push_back(signal_edges(u, "R_signal"));
  EdgeList noise{{"R_noise", t, v}, {}, "synthetic R_noise"};
  for (std::size_t i = 0; i < n_t; ++i) {
    for (std::size_t q = 0; q < cfg.noise_degree; ++q) noise.edges.push_back({i, rng.below(cfg.n_per_class)});
  }
  lists.push_back(std::move(noise));
  if (w) lists.push_back(signal_edges(*w, "R_signal2"));

  std::vector<std::optional<DenseMatrix>> features(types.size());
  DenseMatrix x(n_t, k);
  std::vector<std::pair<std::size_t, int>> labels;
  for (std::size_t i = 0; i < n_t; ++i) {
    for (std::size_t j = 0; j < k; ++j) x(i, j) = (j == i % k ? 1.0 : 0.0) + cfg.noise * rng.normal();
    labels.push_back({i, static_cast<int>(i % k)});
  }
  features[t] = std::move(x);
  return build_graph(std::move(types), lists, std::move(features), t, labels);
}

}  // namespace mhnf::graph
