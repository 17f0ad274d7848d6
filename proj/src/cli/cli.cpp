// SPDX-License-Identifier: Apache-2.0
#include "mhnf/cli/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "CLI11.hpp"
#include "json.hpp"
#include "mhnf/error.hpp"
#include "mhnf/eval/metrics.hpp"
#include "mhnf/graph/hetgraph.hpp"
#include "mhnf/model/hmae.hpp"
#include "mhnf/train/checkpoint.hpp"
#include "mhnf/train/trainer.hpp"

namespace mhnf::cli {

namespace fs = std::filesystem;
using train::Json;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Options {
  train::TrainConfig cfg;
  std::string data;
  std::string synth;
  graph::PlantedConfig planted;
  std::string out = "mhnf_out";
  std::string config_file;
  std::string checkpoint;
  std::string eval_out;
  std::size_t top_k = 5;
  bool per_hop_nmi = false;
  bool save_runs = false;
  std::vector<std::size_t> dims, hops;
};

void add_data_options(CLI::App* app, Options& o) {
  app->add_option("--data", o.data, "Dataset directory (schema.txt, edge files, labels.txt)");
  app->add_option("--synth", o.synth, "Synthetic dataset instead of --data")->check(CLI::IsMember({"planted"}));
  app->add_option("--classes", o.planted.classes, "Planted graph: number of classes");
  app->add_option("--per-class", o.planted.n_per_class, "Planted graph: target nodes per class");
  app->add_option("--noise", o.planted.noise, "Planted graph: edge rewiring probability and feature noise");
  app->add_option("--hubs-per-class", o.planted.hubs_per_class, "Planted graph: hub nodes per class");
  app->add_option("--signal-relations", o.planted.signal_relations, "Planted graph: informative relations (1 or 2)");
  app->add_option("--seed", o.cfg.seed, "Root random seed");
}

void add_train_options(CLI::App* app, Options& o) {
  auto& c = o.cfg;
  app->add_option("--lr", c.lr, "Learning rate");
  app->add_option("--weight-decay", c.weight_decay, "Decoupled weight decay");
  app->add_option("--paths", c.paths, "Number of hybrid paths C");
  app->add_option("--max-hops", c.hops, "Maximum path length L");
  app->add_option("--dim", c.dim, "Embedding dimension d");
  app->add_option("--attn-dim", c.attn_dim, "Attention hidden width");
  app->add_option("--epochs", c.epochs, "Epoch budget");
  app->add_option("--patience", c.patience, "Early-stopping patience");
  app->add_option("--runs", c.runs, "Seeded runs per train ratio");
  app->add_option("--ratios", c.ratios, "Train ratios, comma separated")->delimiter(',');
  app->add_option("--val-ratio", c.val_ratio, "Validation ratio");
  app->add_option("--knn-k", c.knn_k, "Neighbours for KNN evaluation");
  app->add_option("--out", o.out, "Output directory");
  app->add_option("--config", o.config_file, "key=value file; command-line flags take precedence");
}

// Fills options that were not given on the command line from a flat
// key=value file.
void apply_config_file(CLI::App* app, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError(path + ": cannot open config file");
  for (const auto& item : CLI::ConfigINI().from_config(in)) {
    if (item.name == "config") throw UsageError(path + ": config files cannot include other config files");
    CLI::Option* opt = app->get_option_no_throw("--" + item.name);
    if (opt == nullptr) throw UsageError(path + ": unknown key '" + item.name + "'");
    if (opt->count() > 0) continue;
    opt->clear();
    opt->add_result(item.inputs);
    try {
      opt->run_callback();
    } catch (const CLI::Error& e) {
      throw UsageError(path + ": " + e.what());
    }
  }
}

struct Dataset {
  graph::HetGraph graph;
  train::DataSource source;
};

Dataset load_dataset(const Options& o) {
  if (o.data.empty() == o.synth.empty()) throw UsageError("exactly one of --data or --synth is required");
  Dataset d;
  if (!o.data.empty()) {
    d.source.kind = "dir";
    d.source.directory = fs::absolute(o.data).lexically_normal().string();
    d.graph = graph::load_graph(o.data);
  } else {
    d.source.kind = "synth";
    d.source.planted = o.planted;
    d.source.planted.seed = o.cfg.seed;
    d.graph = graph::synth_planted(d.source.planted);
  }
  return d;
}

graph::HetGraph graph_of(const train::DataSource& s) {
  return s.kind == "dir" ? graph::load_graph(s.directory) : graph::synth_planted(s.planted);
}

std::string ratio_key(double r) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", r);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(path.string() + ": cannot write file");
  out << text;
  if (!out) throw DataError(path.string() + ": write failed");
}

void write_json(const fs::path& path, const Json& j) { write_text(path, j.dump(1) + "\n"); }

Json summary_json(const train::RatioBlock& b) {
  Json j = Json::object();
  for (const auto& [k, s] : b.summary) j[k] = {{"mean", s.mean}, {"std", s.std}};
  return j;
}

Json metrics_json(const train::ProtocolReport& rep) {
  Json j = Json::object();
  for (const auto& b : rep.blocks) j[ratio_key(b.ratio)] = summary_json(b);
  return j;
}

Json mixer_json(const model::PathMixerParams& mixer, const std::vector<std::string>& names) {
  Json j = Json::array();
  for (std::size_t p = 0; p < mixer.paths; ++p) {
    Json hops = Json::array();
    for (std::size_t l = 1; l <= mixer.hops; ++l) {
      Json raw = Json::object();
      for (std::size_t m = 0; m < names.size(); ++m) raw[names[m]] = mixer.at(p, l)[m];
      hops.push_back(raw);
    }
    j.push_back(hops);
  }
  return j;
}

Json report_json(const train::ProtocolReport& rep, const train::TrainConfig& cfg, const Dataset& d) {
  const auto names = d.graph.relation_names();
  Json blocks = Json::array();
  for (const auto& b : rep.blocks) {
    Json runs = Json::array();
    for (const auto& r : b.runs) {
      Json curve = Json::array();
      for (const auto& e : r.fit.curve) {
        curve.push_back({{"epoch", e.epoch},
                         {"train_loss", e.train_loss},
                         {"val_loss", e.val_loss},
                         {"val_macro_f1", e.val_macro_f1}});
      }
      const auto mixer = train::mixer_of(r.fit.params, cfg);
      runs.push_back({{"run", r.run},
                      {"seed", r.seed},
                      {"best_epoch", r.fit.best_epoch},
                      {"metrics", train::to_json(r.metrics)},
                      {"raw_relation_weights", mixer_json(mixer, names)},
                      {"attention", train::to_json(r.attention, mixer, names)},
                      {"curve", curve}});
    }
    blocks.push_back({{"ratio", b.ratio}, {"summary", summary_json(b)}, {"runs", runs}});
  }
  Json data{{"kind", d.source.kind}};
  if (d.source.kind == "synth") data["planted"] = train::to_json(d.source.planted);
  else data["directory"] = d.source.directory;
  return Json{{"config", train::to_json(cfg)}, {"data", data}, {"relations", names}, {"blocks", blocks}};
}

train::Checkpoint make_checkpoint(const Dataset& d, const train::TrainConfig& cfg, const train::RunResult& r) {
  train::Checkpoint c;
  c.config = cfg;
  c.data = d.source;
  c.ratio = r.ratio;
  c.run = r.run;
  c.run_seed = r.seed;
  c.split = r.split;
  c.relation_names = d.graph.relation_names();
  c.target_type = d.graph.types[d.graph.target_type].name;
  c.num_nodes = d.graph.num_nodes();
  c.num_classes = d.graph.num_classes;
  c.params = r.fit.params;
  c.metrics = r.metrics;
  return c;
}

std::string type_chain(const graph::HetGraph& g, const model::LearnedPath& p) {
  if (!p.feasible) return "-";
  std::string s = g.types[g.target_type].name;
  for (std::size_t r : p.relations) s += "-" + g.types[g.relations[r].spec.dst].name;
  return s;
}

std::vector<std::vector<model::LearnedPath>> learned_paths(const graph::HetGraph& g, const train::TrainConfig& cfg,
                                                           const model::ParamStore& params,
                                                           const train::AttentionRecord& att, std::size_t top_k) {
  return model::report_learned_paths(train::mixer_of(params, cfg), att.hop_betas, top_k, model::path_schema(g));
}

// Best row over all paths: feasible first, then score.
const model::LearnedPath* top_path(const std::vector<std::vector<model::LearnedPath>>& rows) {
  const model::LearnedPath* best = nullptr;
  for (const auto& path : rows) {
    if (path.empty()) continue;
    const auto& c = path.front();
    if (best == nullptr || (c.feasible && !best->feasible) || (c.feasible == best->feasible && c.score > best->score)) {
      best = &c;
    }
  }
  return best;
}

std::string paths_text(const graph::HetGraph& g, const std::vector<std::vector<model::LearnedPath>>& rows) {
  const auto names = g.relation_names();
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  for (std::size_t p = 0; p < rows.size(); ++p) {
    os << "path " << p << "\n";
    os << "  rank  score   mixer   hop_attn  types       relations\n";
    for (std::size_t k = 0; k < rows[p].size(); ++k) {
      const auto& r = rows[p][k];
      os << "  " << std::setw(4) << std::left << k + 1 << "  " << r.score << "  " << r.mixer_factor << "  "
         << r.hop_attention << "    " << std::setw(10) << type_chain(g, r) << "  " << path_label(r, names) << "\n";
      os << std::right;
    }
  }
  if (const auto* best = top_path(rows)) {
    os << "top path: " << path_label(*best, names) << " (path " << best->path << ", " << type_chain(g, *best)
       << ")\n";
  }
  return os.str();
}

Json paths_json(const graph::HetGraph& g, const std::vector<std::vector<model::LearnedPath>>& rows) {
  const auto names = g.relation_names();
  Json j = Json::array();
  for (const auto& path : rows) {
    Json rs = Json::array();
    for (const auto& r : path) {
      rs.push_back({{"path", r.path},
                    {"relations", path_label(r, names)},
                    {"types", type_chain(g, r)},
                    {"mixer_factor", r.mixer_factor},
                    {"hop_attention", r.hop_attention},
                    {"score", r.score},
                    {"feasible", r.feasible}});
    }
    j.push_back(rs);
  }
  return j;
}

std::string bar(double v) { return std::string(static_cast<std::size_t>(v * 40.0 + 0.5), '#'); }

void print_summary(std::ostream& out, const train::ProtocolReport& rep) {
  out << std::fixed << std::setprecision(4);
  for (const auto& b : rep.blocks) {
    out << "ratio " << ratio_key(b.ratio) << ":";
    for (const auto& [k, s] : b.summary) out << "  " << k << " " << s.mean << " +- " << s.std;
    out << "\n";
  }
  out << std::defaultfloat;
}

int cmd_train(const Options& o, std::ostream& out) {
  o.cfg.validate();
  for (const auto& w : o.cfg.warnings()) out << "warning: " << w << "\n";
  const Dataset d = load_dataset(o);
  const fs::path dir = o.out;
  fs::create_directories(dir);

  const auto rep = train::run_protocol(d.graph, o.cfg, train::thread_budget());
  const auto& first = rep.blocks.front().runs.front();
  const train::Model m(d.graph, o.cfg);
  const auto fr = train::evaluate_forward(m, first.fit.params);

  train::save_checkpoint(dir / "checkpoint.json", make_checkpoint(d, o.cfg, first));
  if (o.save_runs) {
    fs::create_directories(dir / "runs");
    for (const auto& b : rep.blocks) {
      for (const auto& r : b.runs) {
        train::save_checkpoint(dir / "runs" / ("ratio" + ratio_key(b.ratio) + "_run" + std::to_string(r.run) + ".json"),
                               make_checkpoint(d, o.cfg, r));
      }
    }
  }
  write_json(dir / "report.json", report_json(rep, o.cfg, d));
  write_json(dir / "metrics.json", metrics_json(rep));
  write_json(dir / "attention.json",
             train::to_json(fr.attention, train::mixer_of(first.fit.params, o.cfg), d.graph.relation_names()));
  const auto rows = learned_paths(d.graph, o.cfg, first.fit.params, fr.attention, o.top_k);
  write_text(dir / "paths.txt", paths_text(d.graph, rows));
  write_json(dir / "paths.json", paths_json(d.graph, rows));
  const auto targets = d.graph.target_nodes();
  std::vector<int> labels;
  for (auto i : targets) labels.push_back(d.graph.labels[i]);
  const auto z = eval::gather_rows(fr.z, targets);
  eval::export_embeddings(dir / "embeddings.tsv", z, targets, labels);
  eval::export_embeddings(dir / "embeddings_pca.tsv", eval::pca2d(z), targets, labels);

  print_summary(out, rep);
  out << "wrote " << dir.string() << "\n";
  return 0;
}

struct Restored {
  train::Checkpoint ckpt;
  graph::HetGraph graph;
};

Restored restore(const Options& o) {
  if (o.checkpoint.empty()) throw UsageError("--checkpoint is required");
  Restored r{train::load_checkpoint(o.checkpoint), {}};
  if (!o.data.empty() || !o.synth.empty()) {
    Options data_only = o;
    data_only.cfg.seed = r.ckpt.data.planted.seed;
    r.graph = load_dataset(data_only).graph;
  } else {
    r.graph = graph_of(r.ckpt.data);
  }
  train::check_compatible(r.ckpt, r.graph);
  return r;
}

int cmd_eval(const Options& o, std::ostream& out, std::ostream& err) {
  const auto r = restore(o);
  const train::Model m(r.graph, r.ckpt.config);
  const auto metrics = train::evaluate(m, r.ckpt.params, r.ckpt.split, r.ckpt.run_seed);
  const Json j = train::to_json(metrics);
  out << j.dump(1) << "\n";
  if (!o.eval_out.empty()) {
    fs::create_directories(o.eval_out);
    write_json(fs::path(o.eval_out) / "eval.json", j);
  }
  if (!(metrics == r.ckpt.metrics)) {
    err << "error: recomputed metrics differ from the metrics stored in " << o.checkpoint << "\n";
    return 1;
  }
  return 0;
}

int cmd_inspect(const Options& o, std::ostream& out) {
  const auto r = restore(o);
  const train::Model m(r.graph, r.ckpt.config);
  const auto fr = train::evaluate_forward(m, r.ckpt.params);
  const auto& att = fr.attention;
  out << paths_text(r.graph, learned_paths(r.graph, r.ckpt.config, r.ckpt.params, att, o.top_k));
  out << std::fixed << std::setprecision(4);
  for (std::size_t p = 0; p < att.hop_betas.size(); ++p) {
    out << "hop attention, path " << p << "\n";
    for (std::size_t l = 0; l < att.hop_betas[p].size(); ++l) {
      out << "  hop " << l << "  " << att.hop_betas[p][l] << "  " << bar(att.hop_betas[p][l]) << "\n";
    }
  }
  out << "path attention\n";
  for (std::size_t p = 0; p < att.path_betas.size(); ++p) {
    out << "  path " << p << "  " << att.path_betas[p] << "  " << bar(att.path_betas[p]) << "\n";
  }
  if (o.per_hop_nmi) {
    const auto nmi = train::per_hop_nmi(m, fr, r.ckpt.run_seed);
    out << "per-hop clustering NMI\n";
    for (std::size_t p = 0; p < nmi.size(); ++p) {
      out << "  path " << p << ":";
      for (std::size_t l = 0; l < nmi[p].size(); ++l) out << "  hop" << l << " " << nmi[p][l];
      out << "\n";
    }
  }
  out << std::defaultfloat;
  return 0;
}

int cmd_sweep(const Options& o, std::ostream& out) {
  if (o.dims.empty() && o.hops.empty()) throw UsageError("empty sweep grid: give --dims and/or --hops");
  for (auto v : o.dims) {
    if (v == 0) throw UsageError("invalid dimension 0 in --dims");
  }
  for (auto v : o.hops) {
    if (v == 0) throw UsageError("invalid path length 0 in --hops");
  }
  o.cfg.validate();
  const Dataset d = load_dataset(o);
  const std::vector<std::size_t> dims = o.dims.empty() ? std::vector{o.cfg.dim} : o.dims;
  const std::vector<std::size_t> hops = o.hops.empty() ? std::vector{o.cfg.hops} : o.hops;
  const fs::path dir = o.out;
  fs::create_directories(dir);

  std::ostringstream tsv;
  tsv << std::setprecision(17);
  tsv << "dim\thops\tratio";
  const char* cols[] = {"macro_f1", "micro_f1", "macro_f1_knn", "micro_f1_knn", "nmi", "ari"};
  for (const char* c : cols) tsv << "\t" << c << "\t" << c << "_std";
  tsv << "\n";
  for (auto dim : dims) {
    for (auto l : hops) {
      auto cfg = o.cfg;
      cfg.dim = dim;
      cfg.hops = l;
      const auto rep = train::run_protocol(d.graph, cfg, train::thread_budget());
      for (const auto& b : rep.blocks) {
        tsv << dim << "\t" << l << "\t" << ratio_key(b.ratio);
        for (const char* c : cols) tsv << "\t" << b.summary.at(c).mean << "\t" << b.summary.at(c).std;
        tsv << "\n";
        out << "dim " << dim << " hops " << l << " ratio " << ratio_key(b.ratio) << " macro_f1 "
            << b.summary.at("macro_f1").mean << "\n";
      }
    }
  }
  write_text(dir / "sweep.tsv", tsv.str());
  out << "wrote " << (dir / "sweep.tsv").string() << "\n";
  return 0;
}

int cmd_synth(const Options& o, std::ostream& out) {
  if (!o.data.empty()) throw UsageError("synth writes a dataset; --data is not accepted");
  Options s = o;
  s.synth = "planted";
  const Dataset d = load_dataset(s);
  graph::save_graph(d.graph, o.out);
  out << "wrote " << o.out << " (" << d.graph.num_nodes() << " nodes, " << d.graph.num_relations()
      << " relations)\n";
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"Hybrid metapath heterogeneous graph learner", "mhnf"};
  app.require_subcommand(1);

  auto* train = app.add_subcommand("train", "Train over seeded runs and write artifacts");
  add_data_options(train, o);
  add_train_options(train, o);
  train->add_option("--top-k", o.top_k, "Rows per path in the learned-path report");
  train->add_flag("--save-runs", o.save_runs, "Also write one checkpoint per run under runs/");

  auto* eval = app.add_subcommand("eval", "Recompute metrics from a checkpoint");
  eval->add_option("--checkpoint", o.checkpoint, "Checkpoint file")->required();
  add_data_options(eval, o);
  eval->add_option("--out", o.eval_out, "Directory for eval.json");

  auto* inspect = app.add_subcommand("inspect", "Learned paths and attention of a checkpoint");
  inspect->add_option("--checkpoint", o.checkpoint, "Checkpoint file")->required();
  add_data_options(inspect, o);
  inspect->add_option("--top-k", o.top_k, "Rows per path");
  inspect->add_flag("--per-hop-nmi", o.per_hop_nmi, "Cluster every hop embedding and report NMI");

  auto* sweep = app.add_subcommand("sweep", "Grid over embedding dimension and/or path length");
  add_data_options(sweep, o);
  add_train_options(sweep, o);
  sweep->add_option("--dims", o.dims, "Embedding dimensions, comma separated")->delimiter(',');
  sweep->add_option("--hops", o.hops, "Path lengths, comma separated")->delimiter(',');

  auto* synth = app.add_subcommand("synth", "Write a planted-signal dataset directory");
  add_data_options(synth, o);
  synth->add_option("--out", o.out, "Output directory")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
    for (auto* sub : {train, sweep}) {
      if (sub->parsed() && !o.config_file.empty()) apply_config_file(sub, o.config_file);
    }
    if (train->parsed()) return cmd_train(o, out);
    if (eval->parsed()) return cmd_eval(o, out, err);
    if (inspect->parsed()) return cmd_inspect(o, out);
    if (sweep->parsed()) return cmd_sweep(o, out);
    return cmd_synth(o, out);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace mhnf::cli
