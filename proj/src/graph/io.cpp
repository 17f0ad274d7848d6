// SPDX-License-Identifier: Apache-2.0
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "mhnf/error.hpp"
#include "mhnf/graph/hetgraph.hpp"

namespace mhnf::graph {

namespace fs = std::filesystem;

namespace {

struct Line {
  std::size_t number;
  std::vector<std::string> tokens;
};

// Non-blank, non-comment lines split on whitespace.
std::vector<Line> read_lines(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError(path.string() + ": cannot open file");
  std::vector<Line> out;
  std::string text;
  for (std::size_t number = 1; std::getline(in, text); ++number) {
    if (!text.empty() && text.back() == '\r') text.pop_back();
    std::istringstream ss(text);
    Line line{number, {}};
    for (std::string tok; ss >> tok;) line.tokens.push_back(tok);
    if (line.tokens.empty() || line.tokens.front().starts_with('#')) continue;
    out.push_back(std::move(line));
  }
  return out;
}

std::string where(const fs::path& path, std::size_t line) { return path.string() + ":" + std::to_string(line); }

std::size_t parse_count(const std::string& tok, const fs::path& path, std::size_t line) {
  std::size_t v = 0;
  auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || p != tok.data() + tok.size()) {
    throw DataError(where(path, line) + ": expected a non-negative integer, got '" + tok + "'");
  }
  return v;
}

double parse_double(const std::string& tok, const fs::path& path, std::size_t line) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(tok, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != tok.size() || !std::isfinite(v)) {
    throw DataError(where(path, line) + ": expected a finite number, got '" + tok + "'");
  }
  return v;
}

// Node reference "id" or "type:id" within the declared type `expected`.
std::size_t parse_node(const std::string& tok, const NodeTypeTable& types, std::size_t expected,
                       const std::string& relation, const fs::path& path, std::size_t line) {
  std::string id = tok;
  if (auto colon = tok.find(':'); colon != std::string::npos) {
    const std::string type = tok.substr(0, colon);
    if (type != types[expected].name) {
      throw DataError(where(path, line) + ": node '" + tok + "' violates relation " + relation + ", expected type " +
                      types[expected].name);
    }
    id = tok.substr(colon + 1);
  }
  const std::size_t v = parse_count(id, path, line);
  if (v >= types[expected].count) {
    throw DataError(where(path, line) + ": unknown node id " + id + " for type " + types[expected].name + " (count " +
                    std::to_string(types[expected].count) + ")");
  }
  return v;
}

}  // namespace

HetGraph load_graph(const fs::path& dir) {
  const fs::path schema_path = dir / "schema.txt";
  if (!fs::exists(schema_path)) throw DataError(schema_path.string() + ": schema file not found");

  NodeTypeTable types;
  std::vector<EdgeList> lists;
  for (const auto& line : read_lines(schema_path)) {
    const auto& t = line.tokens;
    if (t[0] == "nodetype" && t.size() == 3) {
      if (types.find(t[1])) throw DataError(where(schema_path, line.number) + ": duplicate node type '" + t[1] + "'");
      types.add(t[1], parse_count(t[2], schema_path, line.number));
    } else if (t[0] == "relation" && t.size() == 4) {
      auto src = types.find(t[2]);
      auto dst = types.find(t[3]);
      if (!src || !dst) {
        throw DataError(where(schema_path, line.number) + ": relation '" + t[1] + "' uses undeclared node type");
      }
      for (const auto& e : lists) {
        if (e.spec.name == t[1]) {
          throw DataError(where(schema_path, line.number) + ": duplicate relation '" + t[1] + "'");
        }
      }
      lists.push_back({{t[1], *src, *dst}, {}, ""});
    } else {
      throw DataError(where(schema_path, line.number) + ": expected 'nodetype <name> <count>' or "
                      "'relation <name> <src> <dst>'");
    }
  }
  if (types.size() == 0) throw DataError(schema_path.string() + ": no node types declared");
  if (lists.empty()) throw DataError(schema_path.string() + ": no relations declared");

  for (auto& e : lists) {
    const fs::path path = dir / (e.spec.name + ".edges");
    if (!fs::exists(path)) throw DataError(path.string() + ": edge file not found");
    e.origin = path.string();
    for (const auto& line : read_lines(path)) {
      if (line.tokens.size() != 2) {
        throw DataError(where(path, line.number) + ": expected 'src dst', got " + std::to_string(line.tokens.size()) +
                        " fields");
      }
      e.edges.push_back({parse_node(line.tokens[0], types, e.spec.src, e.spec.name, path, line.number),
                         parse_node(line.tokens[1], types, e.spec.dst, e.spec.name, path, line.number)});
    }
    if (e.edges.empty()) throw DataError(path.string() + ": relation has zero edges");
  }

  std::vector<std::optional<DenseMatrix>> features(types.size());
  for (std::size_t k = 0; k < types.size(); ++k) {
    const fs::path path = dir / (types[k].name + ".features");
    if (!fs::exists(path)) continue;
    const auto lines = read_lines(path);
    if (lines.size() != types[k].count) {
      throw DataError(path.string() + ": node count mismatch, " + std::to_string(lines.size()) +
                      " feature rows for " + std::to_string(types[k].count) + " nodes of type " + types[k].name);
    }
    const std::size_t width = lines.empty() ? 0 : lines.front().tokens.size();
    DenseMatrix x(types[k].count, width);
    for (std::size_t i = 0; i < lines.size(); ++i) {
      if (lines[i].tokens.size() != width) {
        throw DataError(where(path, lines[i].number) + ": non-rectangular feature row with " +
                        std::to_string(lines[i].tokens.size()) + " values, expected " + std::to_string(width));
      }
      for (std::size_t j = 0; j < width; ++j) x(i, j) = parse_double(lines[i].tokens[j], path, lines[i].number);
    }
    features[k] = std::move(x);
  }

  const fs::path label_path = dir / "labels.txt";
  if (!fs::exists(label_path)) throw DataError(label_path.string() + ": label file not found");
  const auto label_lines = read_lines(label_path);
  if (label_lines.empty() || label_lines[0].tokens.size() != 2 || label_lines[0].tokens[0] != "target") {
    throw DataError(label_path.string() + ": first line must be 'target <typename>'");
  }
  const auto target = types.find(label_lines[0].tokens[1]);
  if (!target) {
    throw DataError(where(label_path, label_lines[0].number) + ": unknown target type '" +
                    label_lines[0].tokens[1] + "'");
  }
  std::vector<std::pair<std::size_t, int>> labels;
  std::vector<bool> seen(types[*target].count, false);
  for (std::size_t q = 1; q < label_lines.size(); ++q) {
    const auto& line = label_lines[q];
    if (line.tokens.size() != 2) throw DataError(where(label_path, line.number) + ": expected 'local_id class_index'");
    const std::size_t id = parse_node(line.tokens[0], types, *target, "labels", label_path, line.number);
    const std::size_t cls = parse_count(line.tokens[1], label_path, line.number);
    if (seen[id]) throw DataError(where(label_path, line.number) + ": duplicate label for node " + line.tokens[0]);
    seen[id] = true;
    labels.push_back({id, static_cast<int>(cls)});
  }
  if (labels.empty()) throw DataError(label_path.string() + ": no labeled nodes");
  return build_graph(std::move(types), lists, std::move(features), *target, labels);
}

void save_graph(const HetGraph& g, const fs::path& dir) {
  fs::create_directories(dir);
  auto open = [](const fs::path& p) {
    std::ofstream out(p);
    if (!out) throw DataError(p.string() + ": cannot write file");
    out.precision(17);
    return out;
  };
  {
    auto out = open(dir / "schema.txt");
    for (const auto& t : g.types.types()) out << "nodetype " << t.name << ' ' << t.count << '\n';
    for (const auto& r : g.relations) {
      if (r.derived) continue;
      out << "relation " << r.spec.name << ' ' << g.types[r.spec.src].name << ' ' << g.types[r.spec.dst].name << '\n';
    }
  }
  for (const auto& r : g.relations) {
    if (r.derived) continue;
    auto out = open(dir / (r.spec.name + ".edges"));
    const auto so = g.types[r.spec.src].offset;
    const auto d = g.types[r.spec.dst].offset;
    for (std::size_t i = 0; i < r.matrix.rows(); ++i) {
      for (auto j : r.matrix.row_cols(i)) out << i - so << ' ' << j - d << '\n';
    }
  }
  for (std::size_t k = 0; k < g.types.size(); ++k) {
    if (!g.features[k]) continue;
    auto out = open(dir / (g.types[k].name + ".features"));
    const auto& x = *g.features[k];
    for (std::size_t i = 0; i < x.rows(); ++i) {
      for (std::size_t j = 0; j < x.cols(); ++j) out << (j ? " " : "") << x(i, j);
      out << '\n';
    }
  }
  auto out = open(dir / "labels.txt");
  const auto& t = g.types[g.target_type];
  out << "target " << t.name << '\n';
  for (std::size_t i = 0; i < t.count; ++i) {
    if (g.labels[t.offset + i] >= 0) out << i << ' ' << g.labels[t.offset + i] << '\n';
  }
}

}  // namespace mhnf::graph
