// SPDX-License-Identifier: Apache-2.0
#include "mhnf/train/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <fstream>

#include "mhnf/error.hpp"
#include "mhnf/model/hmae.hpp"

namespace mhnf::train {

Json to_json(const TrainConfig& c) {
  return Json{{"lr", c.lr},
              {"weight_decay", c.weight_decay},
              {"paths", c.paths},
              {"hops", c.hops},
              {"dim", c.dim},
              {"attn_dim", c.attn_dim},
              {"epochs", c.epochs},
              {"patience", c.patience},
              {"seed", c.seed},
              {"runs", c.runs},
              {"ratios", c.ratios},
              {"val_ratio", c.val_ratio},
              {"knn_k", c.knn_k},
              {"kmeans_restarts", c.kmeans_restarts},
              {"mixer_init", c.mixer_init},
              {"embed_std", c.embed_std},
              {"fixed_paths", c.fixed_paths}};
}

TrainConfig config_from_json(const Json& j) {
  TrainConfig c;
  c.lr = j.at("lr").get<double>();
  c.weight_decay = j.at("weight_decay").get<double>();
  c.paths = j.at("paths").get<std::size_t>();
  c.hops = j.at("hops").get<std::size_t>();
  c.dim = j.at("dim").get<std::size_t>();
  c.attn_dim = j.at("attn_dim").get<std::size_t>();
  c.epochs = j.at("epochs").get<std::size_t>();
  c.patience = j.at("patience").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.runs = j.at("runs").get<std::size_t>();
  c.ratios = j.at("ratios").get<std::vector<double>>();
  c.val_ratio = j.at("val_ratio").get<double>();
  c.knn_k = j.at("knn_k").get<std::size_t>();
  c.kmeans_restarts = j.at("kmeans_restarts").get<std::size_t>();
  c.mixer_init = j.at("mixer_init").get<double>();
  c.embed_std = j.at("embed_std").get<double>();
  c.fixed_paths = j.at("fixed_paths").get<std::vector<std::vector<std::size_t>>>();
  return c;
}

Json to_json(const graph::PlantedConfig& c) {
  return Json{{"seed", c.seed},
              {"n_per_class", c.n_per_class},
              {"classes", c.classes},
              {"noise", c.noise},
              {"hubs_per_class", c.hubs_per_class},
              {"hub_degree", c.hub_degree},
              {"noise_degree", c.noise_degree},
              {"signal_relations", c.signal_relations}};
}

graph::PlantedConfig planted_from_json(const Json& j) {
  graph::PlantedConfig c;
  c.seed = j.at("seed").get<std::uint64_t>();
  c.n_per_class = j.at("n_per_class").get<std::size_t>();
  c.classes = j.at("classes").get<int>();
  c.noise = j.at("noise").get<double>();
  c.hubs_per_class = j.at("hubs_per_class").get<std::size_t>();
  c.hub_degree = j.at("hub_degree").get<std::size_t>();
  c.noise_degree = j.at("noise_degree").get<std::size_t>();
  c.signal_relations = j.at("signal_relations").get<int>();
  return c;
}

Json to_json(const Metrics& m) {
  Json j = Json::object();
  for (auto [k, v] : metric_map(m)) j[k] = v;
  return j;
}

Metrics metrics_from_json(const Json& j) {
  Metrics m;
  m.macro_f1 = j.at("macro_f1").get<double>();
  m.micro_f1 = j.at("micro_f1").get<double>();
  m.macro_f1_knn = j.at("macro_f1_knn").get<double>();
  m.micro_f1_knn = j.at("micro_f1_knn").get<double>();
  m.nmi = j.at("nmi").get<double>();
  m.ari = j.at("ari").get<double>();
  return m;
}

Json to_json(const AttentionRecord& a, const model::PathMixerParams& mixer,
             const std::vector<std::string>& relation_names) {
  Json j = Json::object();
  for (std::size_t p = 0; p < a.hop_betas.size(); ++p) {
    Json weights = Json::array();
    for (std::size_t l = 1; l <= mixer.hops; ++l) {
      Json hop = Json::object();
      const auto soft = model::relation_softmax(mixer.at(p, l));
      for (std::size_t m = 0; m < soft.size(); ++m) hop[relation_names.at(m)] = soft[m];
      weights.push_back(hop);
    }
    j[std::to_string(p)] = {{"hop_betas", a.hop_betas[p]}, {"path_beta", a.path_betas[p]}, {"relation_weights", weights}};
  }
  return j;
}

std::string params_checksum(const ParamStore& params) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&](std::uint64_t x) {
    for (int b = 0; b < 8; ++b) {
      h ^= (x >> (8 * b)) & 0xFF;
      h *= 0x100000001b3ULL;
    }
  };
  for (std::size_t k = 0; k < params.size(); ++k) {
    for (char ch : params.names()[k]) feed(static_cast<unsigned char>(ch));
    feed(params.values()[k].rows());
    feed(params.values()[k].cols());
    for (double v : params.values()[k].values()) feed(std::bit_cast<std::uint64_t>(v));
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  Json tensors = Json::array();
  for (std::size_t k = 0; k < c.params.size(); ++k) {
    const auto& v = c.params.values()[k];
    tensors.push_back({{"name", c.params.names()[k]},
                       {"rows", v.rows()},
                       {"cols", v.cols()},
                       {"values", std::vector<double>(v.values().begin(), v.values().end())}});
  }
  Json data{{"kind", c.data.kind}};
  if (c.data.kind == "synth") data["planted"] = to_json(c.data.planted);
  else data["directory"] = c.data.directory;
  const Json j{{"format", kCheckpointFormat},
               {"version", kCheckpointVersion},
               {"config", to_json(c.config)},
               {"data", data},
               {"ratio", c.ratio},
               {"run", c.run},
               {"run_seed", c.run_seed},
               {"split", {{"train", c.split.train}, {"val", c.split.val}, {"test", c.split.test}}},
               {"schema",
                {{"relations", c.relation_names},
                 {"target_type", c.target_type},
                 {"num_nodes", c.num_nodes},
                 {"num_classes", c.num_classes}}},
               {"params", tensors},
               {"checksum", params_checksum(c.params)},
               {"metrics", to_json(c.metrics)}};
  std::ofstream out(path);
  if (!out) throw CheckpointError(path.string() + ": cannot write checkpoint");
  out << j.dump(1) << '\n';
  if (!out) throw CheckpointError(path.string() + ": write failed");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CheckpointError(path.string() + ": cannot open checkpoint");
  Checkpoint c;
  try {
    const Json j = Json::parse(in);
    if (j.at("format").get<std::string>() != kCheckpointFormat) throw CheckpointError("not an mhnf checkpoint");
    if (j.at("version").get<int>() != kCheckpointVersion) {
      throw CheckpointError("unsupported checkpoint version " + std::to_string(j.at("version").get<int>()));
    }
    c.config = config_from_json(j.at("config"));
    const auto& data = j.at("data");
    c.data.kind = data.at("kind").get<std::string>();
    if (c.data.kind == "synth") c.data.planted = planted_from_json(data.at("planted"));
    else if (c.data.kind == "dir") c.data.directory = data.at("directory").get<std::string>();
    else throw CheckpointError("unknown data source kind '" + c.data.kind + "'");
    c.ratio = j.at("ratio").get<double>();
    c.run = j.at("run").get<std::size_t>();
    c.run_seed = j.at("run_seed").get<std::uint64_t>();
    c.split.train = j.at("split").at("train").get<std::vector<std::size_t>>();
    c.split.val = j.at("split").at("val").get<std::vector<std::size_t>>();
    c.split.test = j.at("split").at("test").get<std::vector<std::size_t>>();
    c.split.seed = c.run_seed;
    const auto& schema = j.at("schema");
    c.relation_names = schema.at("relations").get<std::vector<std::string>>();
    c.target_type = schema.at("target_type").get<std::string>();
    c.num_nodes = schema.at("num_nodes").get<std::size_t>();
    c.num_classes = schema.at("num_classes").get<int>();
    for (const auto& t : j.at("params")) {
      const auto rows = t.at("rows").get<std::size_t>(), cols = t.at("cols").get<std::size_t>();
      c.params.add(t.at("name").get<std::string>(), DenseMatrix(rows, cols, t.at("values").get<std::vector<double>>()));
    }
    if (params_checksum(c.params) != j.at("checksum").get<std::string>()) {
      throw CheckpointError("parameter checksum mismatch");
    }
    c.metrics = metrics_from_json(j.at("metrics"));
    c.config.validate();
  } catch (const CheckpointError& e) {
    throw CheckpointError(path.string() + ": " + e.what());
  } catch (const std::exception& e) {
    throw CheckpointError(path.string() + ": corrupted checkpoint (" + e.what() + ")");
  }
  return c;
}

void check_compatible(const Checkpoint& c, const graph::HetGraph& g) {
  if (g.relation_names() != c.relation_names) throw CheckpointError("checkpoint relations do not match the dataset");
  if (g.types[g.target_type].name != c.target_type) throw CheckpointError("checkpoint target type differs");
  if (g.num_nodes() != c.num_nodes) throw CheckpointError("checkpoint node count differs from the dataset");
  if (g.num_classes != c.num_classes) throw CheckpointError("checkpoint class count differs from the dataset");
  auto in_range = [&](const std::vector<std::size_t>& v) {
    for (auto i : v) {
      if (i >= g.num_nodes() || g.labels[i] < 0) return false;
    }
    return true;
  };
  if (!in_range(c.split.train) || !in_range(c.split.val) || !in_range(c.split.test)) {
    throw CheckpointError("checkpoint split references unlabeled or missing nodes");
  }
  const auto fresh = init_params(g, c.config, 0);
  if (fresh.names() != c.params.names()) throw CheckpointError("checkpoint parameters do not match the model layout");
  for (std::size_t k = 0; k < fresh.size(); ++k) {
    if (!fresh.values()[k].same_shape(c.params.values()[k])) {
      throw CheckpointError("parameter '" + fresh.names()[k] + "' has the wrong shape");
    }
  }
}

}  // namespace mhnf::train
