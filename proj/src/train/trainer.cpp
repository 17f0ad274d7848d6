// SPDX-License-Identifier: Apache-2.0
#include "mhnf/train/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <limits>
#include <mutex>
#include <stdexcept>
#include <thread>

#include "mhnf/error.hpp"
#include "mhnf/eval/metrics.hpp"
#include "mhnf/model/hlhia.hpp"
#include "mhnf/model/hsaf.hpp"
#include "mhnf/nd/adam.hpp"
#include "mhnf/nd/ops.hpp"

namespace mhnf::train {

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument(what); };
  if (!(lr >= 0.0) || !std::isfinite(lr)) fail("lr must be a finite value >= 0");
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) fail("weight_decay must be a finite value >= 0");
  if (paths == 0) fail("paths must be >= 1");
  if (hops == 0) fail("max hops must be >= 1");
  if (dim == 0) fail("dim must be >= 1");
  if (attn_dim == 0) fail("attn_dim must be >= 1");
  if (epochs == 0) fail("epochs must be >= 1");
  if (patience == 0) fail("patience must be >= 1");
  if (runs == 0) fail("runs must be >= 1");
  if (ratios.empty()) fail("at least one train ratio is required");
  for (double r : ratios) {
    if (!(r > 0.0) || !(r + val_ratio < 1.0)) fail("train ratio " + std::to_string(r) + " leaves no test nodes");
  }
  if (!(val_ratio > 0.0 && val_ratio < 1.0)) fail("val_ratio must be in (0, 1)");
  if (knn_k == 0) fail("knn_k must be >= 1");
  if (kmeans_restarts == 0) fail("kmeans_restarts must be >= 1");
  if (!fixed_paths.empty()) {
    if (fixed_paths.size() != paths) fail("fixed_paths needs one entry per path");
    for (const auto& p : fixed_paths) {
      if (p.size() != hops) fail("fixed_paths entries need one relation per hop");
    }
  }
}

std::vector<std::string> TrainConfig::warnings() const {
  std::vector<std::string> out;
  if (paths > 5) out.push_back("paths = " + std::to_string(paths) + " is outside the usual range [1, 5]");
  return out;
}

std::string mixer_name(std::size_t path, std::size_t hop) {
  return "mixer.p" + std::to_string(path) + ".h" + std::to_string(hop);
}

namespace {

std::string path_key(const char* prefix, std::size_t p, const char* suffix = "") {
  return std::string(prefix) + ".p" + std::to_string(p) + suffix;
}

}  // namespace

ParamStore init_params(const graph::HetGraph& g, const TrainConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ParamStore ps;
  std::uint64_t stream = 0;
  auto rng = [&] { return Rng(stream_seed(seed, "init", stream++)); };
  const std::size_t m = g.num_relations();
  for (std::size_t p = 0; p < cfg.paths; ++p) {
    for (std::size_t l = 1; l <= cfg.hops; ++l) {
      DenseMatrix w(m, 1, cfg.mixer_init);
      if (!cfg.fixed_paths.empty()) {
        const std::size_t r = cfg.fixed_paths[p][l - 1];
        if (r >= m) throw std::invalid_argument("fixed path relation index out of range");
        w = DenseMatrix(m, 1);
        w(r, 0) = 1.0;
      }
      ps.add(mixer_name(p, l), std::move(w));
    }
  }
  for (std::size_t k = 0; k < g.types.size(); ++k) {
    const auto& t = g.types[k];
    if (g.features[k]) {
      auto r = rng();
      ps.add("proj." + t.name, model::glorot(r, g.features[k]->cols(), cfg.dim));
    } else {
      auto r = rng();
      ps.add("embed." + t.name, model::gaussian(r, t.count, cfg.dim, cfg.embed_std));
    }
  }
  for (std::size_t p = 0; p < cfg.paths; ++p) {
    auto r1 = rng();
    ps.add(path_key("agg", p), model::glorot(r1, cfg.dim, cfg.dim));
    auto r2 = rng();
    ps.add(path_key("hop_attn", p, ".W"), model::glorot(r2, cfg.dim, cfg.attn_dim));
    auto r3 = rng();
    ps.add(path_key("hop_attn", p, ".delta"), model::glorot(r3, cfg.attn_dim, 1));
  }
  auto r4 = rng();
  ps.add("path_attn.W", model::glorot(r4, cfg.dim, cfg.attn_dim));
  auto r5 = rng();
  ps.add("path_attn.delta", model::glorot(r5, cfg.attn_dim, 1));
  auto r6 = rng();
  ps.add("head.W", model::glorot(r6, cfg.dim, static_cast<std::size_t>(g.num_classes)));
  ps.add("head.b", DenseMatrix(1, static_cast<std::size_t>(g.num_classes)));
  return ps;
}

std::vector<std::string> frozen_params(const TrainConfig& cfg) {
  std::vector<std::string> out;
  if (cfg.fixed_paths.empty()) return out;
  for (std::size_t p = 0; p < cfg.paths; ++p) {
    for (std::size_t l = 1; l <= cfg.hops; ++l) out.push_back(mixer_name(p, l));
  }
  return out;
}

model::PathMixerParams mixer_of(const ParamStore& params, const TrainConfig& cfg) {
  const std::size_t m = params.get(mixer_name(0, 1)).rows();
  model::PathMixerParams out = model::PathMixerParams::constant(cfg.paths, cfg.hops, m, 0.0);
  for (std::size_t p = 0; p < cfg.paths; ++p) {
    for (std::size_t l = 1; l <= cfg.hops; ++l) {
      const auto v = params.get(mixer_name(p, l)).values();
      out.at(p, l).assign(v.begin(), v.end());
    }
  }
  return out;
}

Model::Model(const graph::HetGraph& g, TrainConfig cfg)
    : graph_(&g), config_(std::move(cfg)), pattern_(nd::union_pattern(g.relation_matrices())),
      targets_(g.target_nodes()) {
  config_.validate();
}

ForwardVars forward(nd::Tape& t, const Model& m, const model::ParamVars& v) {
  const auto& g = m.graph();
  const auto& cfg = m.config();
  model::ProjectionVars pv;
  for (std::size_t k = 0; k < g.types.size(); ++k) {
    const auto& name = g.types[k].name;
    pv.projection.push_back(g.features[k] ? v["proj." + name] : nd::Var{});
    pv.embedding.push_back(g.features[k] ? nd::Var{} : v["embed." + name]);
  }
  const nd::Var h = model::project(t, g, pv);

  ForwardVars out;
  for (std::size_t p = 0; p < cfg.paths; ++p) {
    std::vector<nd::SpVar> mixes;
    for (std::size_t l = 1; l <= cfg.hops; ++l) mixes.push_back(model::mix_hop(t, m.pattern(), v[mixer_name(p, l)]));
    const auto chain = model::chain_hops(t, mixes);
    auto z = model::aggregate_all(t, chain, h, v[path_key("agg", p)]);
    auto fused = model::hop_fuse(t, z, v[path_key("hop_attn", p, ".W")], v[path_key("hop_attn", p, ".delta")]);
    out.hop_z.push_back(std::move(z));
    out.path_z.push_back(fused.fused);
    out.hop_weights.push_back(fused.weights);
  }
  auto fused = model::path_fuse(t, out.path_z, v["path_attn.W"], v["path_attn.delta"]);
  out.z = fused.fused;
  out.path_weights = fused.weights;
  out.logits = model::classify(t, out.z, v["head.W"], v["head.b"]);
  return out;
}

namespace {

AttentionRecord attention_of(const nd::Tape& t, const ForwardVars& fv, std::span<const std::size_t> targets) {
  AttentionRecord a;
  for (nd::Var w : fv.hop_weights) {
    a.hop_beta_nodes.push_back(t.value(w));
    a.hop_betas.push_back(model::column_means(t.value(w), targets));
  }
  a.path_beta_nodes = t.value(fv.path_weights);
  a.path_betas = model::column_means(a.path_beta_nodes, targets);
  return a;
}

}  // namespace

ForwardResult evaluate_forward(const Model& m, const ParamStore& params) {
  nd::Tape t;
  const model::ParamVars v(t, params, params.names());
  const auto fv = forward(t, m, v);
  ForwardResult r;
  r.z = t.value(fv.z);
  r.logits = t.value(fv.logits);
  for (const auto& hops : fv.hop_z) {
    r.hop_z.emplace_back();
    for (nd::Var z : hops) r.hop_z.back().push_back(t.value(z));
  }
  r.attention = attention_of(t, fv, m.target_nodes());
  return r;
}

std::vector<int> argmax_rows(const DenseMatrix& logits, std::span<const std::size_t> rows) {
  std::vector<int> out;
  out.reserve(rows.size());
  for (std::size_t r : rows) {
    const auto row = logits.row(r);
    out.push_back(static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin()));
  }
  return out;
}

namespace {

std::vector<int> labels_at(const graph::HetGraph& g, std::span<const std::size_t> rows) {
  std::vector<int> out;
  out.reserve(rows.size());
  for (std::size_t r : rows) out.push_back(g.labels[r]);
  return out;
}

}  // namespace

FitResult fit(const Model& m, const graph::LabeledSplit& split, std::uint64_t seed) {
  const auto& cfg = m.config();
  const auto& g = m.graph();
  if (split.train.empty() || split.val.empty()) throw TrainingError("split needs train and validation nodes");
  FitResult result;
  ParamStore params = init_params(g, cfg, seed);
  const auto frozen = frozen_params(cfg);
  std::vector<std::size_t> trainable;
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (std::find(frozen.begin(), frozen.end(), params.names()[k]) == frozen.end()) trainable.push_back(k);
  }
  nd::AdamState adam({cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay});
  const auto val_truth = labels_at(g, split.val);

  result.params = params;
  std::size_t since_best = 0;
  double best_val_loss = std::numeric_limits<double>::infinity();
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    try {
      nd::Tape t;
      const model::ParamVars v(t, params, frozen);
      const auto fv = forward(t, m, v);
      const nd::Var loss = nd::cross_entropy(t, fv.logits, g.labels, split.train);
      const auto& logits = t.value(fv.logits);
      EpochStats s{epoch, t.value(loss)(0, 0), nd::cross_entropy(logits, g.labels, split.val),
                   eval::f1_scores(argmax_rows(logits, split.val), val_truth).macro};
      result.curve.push_back(s);
      // Equal validation F1 is resolved by validation loss.
      const bool better = s.val_macro_f1 > result.best_val_f1 ||
                          (s.val_macro_f1 == result.best_val_f1 && s.val_loss < best_val_loss);
      if (better) {
        result.best_val_f1 = s.val_macro_f1;
        best_val_loss = s.val_loss;
        result.best_epoch = epoch;
        result.params = params;
        since_best = 0;
      } else if (++since_best >= cfg.patience) {
        break;
      }
      if (epoch == cfg.epochs) break;  // the final update would never be evaluated
      t.backward(loss);
      std::vector<DenseMatrix*> ptrs;
      std::vector<DenseMatrix> grads;
      for (std::size_t k : trainable) {
        ptrs.push_back(&params.values()[k]);
        grads.push_back(t.grad(v.all()[k]));
      }
      adam.step(ptrs, grads);
      for (auto* p : ptrs) {
        if (!p->all_finite()) throw NumericError("parameter update produced a non-finite value");
      }
    } catch (const NumericError& e) {
      throw TrainingError("training diverged at epoch " + std::to_string(epoch) + ": " + e.what());
    }
  }
  return result;
}

std::map<std::string, double> metric_map(const Metrics& m) {
  return {{"macro_f1", m.macro_f1}, {"micro_f1", m.micro_f1}, {"macro_f1_knn", m.macro_f1_knn},
          {"micro_f1_knn", m.micro_f1_knn}, {"nmi", m.nmi}, {"ari", m.ari}};
}

Metrics evaluate(const Model& m, const ForwardResult& fr, const graph::LabeledSplit& split, std::uint64_t seed) {
  const auto& g = m.graph();
  const auto& cfg = m.config();
  Metrics out;
  const auto truth = labels_at(g, split.test);
  const auto head = eval::f1_scores(argmax_rows(fr.logits, split.test), truth);
  out.macro_f1 = head.macro;
  out.micro_f1 = head.micro;

  const auto knn_pred = eval::knn_predict(eval::gather_rows(fr.z, split.train), labels_at(g, split.train),
                                          eval::gather_rows(fr.z, split.test),
                                          std::min(cfg.knn_k, split.train.size()));
  const auto knn = eval::f1_scores(knn_pred, truth);
  out.macro_f1_knn = knn.macro;
  out.micro_f1_knn = knn.micro;

  const auto labeled = g.labeled_nodes();
  const auto clusters = eval::kmeans(eval::gather_rows(fr.z, labeled), static_cast<std::size_t>(g.num_classes),
                                     stream_seed(seed, "kmeans"), cfg.kmeans_restarts);
  const auto all_truth = labels_at(g, labeled);
  out.nmi = eval::nmi(clusters.assignment, all_truth);
  out.ari = eval::ari(clusters.assignment, all_truth);
  return out;
}

Metrics evaluate(const Model& m, const ParamStore& params, const graph::LabeledSplit& split, std::uint64_t seed) {
  return evaluate(m, evaluate_forward(m, params), split, seed);
}

std::vector<std::vector<double>> per_hop_nmi(const Model& m, const ForwardResult& fr, std::uint64_t seed) {
  const auto& g = m.graph();
  const auto labeled = g.labeled_nodes();
  const auto truth = labels_at(g, labeled);
  std::vector<std::vector<double>> out;
  for (std::size_t p = 0; p < fr.hop_z.size(); ++p) {
    out.emplace_back();
    for (std::size_t l = 0; l < fr.hop_z[p].size(); ++l) {
      const auto c = eval::kmeans(eval::gather_rows(fr.hop_z[p][l], labeled), static_cast<std::size_t>(g.num_classes),
                                  stream_seed(seed, "hop-kmeans", p * 1000 + l), m.config().kmeans_restarts);
      out.back().push_back(eval::nmi(c.assignment, truth));
    }
  }
  return out;
}

std::uint64_t run_seed(const TrainConfig& cfg, std::size_t r) { return stream_seed(cfg.seed, "run", r); }

RunResult run_once(const Model& m, double ratio, std::size_t r) {
  const auto& cfg = m.config();
  RunResult out;
  out.ratio = ratio;
  out.run = r;
  out.seed = run_seed(cfg, r);
  out.split = graph::split_nodes(m.graph(), ratio, cfg.val_ratio, out.seed);
  out.fit = fit(m, out.split, out.seed);
  const auto fr = evaluate_forward(m, out.fit.params);
  out.metrics = evaluate(m, fr, out.split, out.seed);
  out.attention = fr.attention;
  return out;
}

std::size_t thread_budget() {
  const char* env = std::getenv("MHNF_THREADS");
  if (env == nullptr || *env == '\0') return 1;
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (end == env || *end != '\0' || v < 1) return 1;
  return static_cast<std::size_t>(v);
}

ProtocolReport run_protocol(const graph::HetGraph& g, const TrainConfig& cfg, std::size_t threads) {
  const Model m(g, cfg);
  struct Job {
    std::size_t block, run;
  };
  std::vector<Job> jobs;
  ProtocolReport report;
  for (std::size_t b = 0; b < cfg.ratios.size(); ++b) {
    report.blocks.push_back({cfg.ratios[b], std::vector<RunResult>(cfg.runs), {}});
    for (std::size_t r = 0; r < cfg.runs; ++r) jobs.push_back({b, r});
  }

  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (std::size_t j; (j = next++) < jobs.size();) {
      try {
        auto& slot = report.blocks[jobs[j].block].runs[jobs[j].run];
        slot = run_once(m, cfg.ratios[jobs[j].block], jobs[j].run);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next = jobs.size();
      }
    }
  };
  const std::size_t n = std::clamp<std::size_t>(threads, 1, jobs.size());
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t k = 0; k < n; ++k) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (error) std::rethrow_exception(error);

  for (auto& block : report.blocks) {
    std::map<std::string, std::vector<double>> values;
    for (const auto& run : block.runs) {
      for (auto [k, v] : metric_map(run.metrics)) values[k].push_back(v);
    }
    for (auto& [k, vs] : values) {
      double mean = 0.0;
      for (double v : vs) mean += v;
      mean /= static_cast<double>(vs.size());
      double var = 0.0;
      for (double v : vs) var += (v - mean) * (v - mean);
      block.summary[k] = {mean, std::sqrt(var / static_cast<double>(vs.size()))};
    }
  }
  return report;
}

}  // namespace mhnf::train
