// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "mhnf/graph/hetgraph.hpp"
#include "mhnf/train/trainer.hpp"

namespace mhnf::train {

using Json = nlohmann::ordered_json;

inline constexpr const char* kCheckpointFormat = "mhnf-checkpoint";
inline constexpr int kCheckpointVersion = 1;

/// Where the graph of a checkpoint came from.
struct DataSource {
  std::string kind = "synth";  // "synth" or "dir"
  graph::PlantedConfig planted;
  std::string directory;
};

struct Checkpoint {
  TrainConfig config;
  DataSource data;
  double ratio = 0.0;
  std::size_t run = 0;
  std::uint64_t run_seed = 0;
  graph::LabeledSplit split;
  std::vector<std::string> relation_names;
  std::string target_type;
  std::size_t num_nodes = 0;
  int num_classes = 0;
  ParamStore params;
  Metrics metrics;
};

Json to_json(const TrainConfig& c);
TrainConfig config_from_json(const Json& j);
Json to_json(const graph::PlantedConfig& c);
graph::PlantedConfig planted_from_json(const Json& j);
Json to_json(const Metrics& m);
Metrics metrics_from_json(const Json& j);
Json to_json(const AttentionRecord& a, const model::PathMixerParams& mixer,
             const std::vector<std::string>& relation_names);

/// FNV-1a over parameter names and the bit patterns of their values.
std::string params_checksum(const ParamStore& params);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c);
/// Throws CheckpointError on unreadable, malformed or tampered files.
Checkpoint load_checkpoint(const std::filesystem::path& path);
/// Throws CheckpointError when the graph's schema differs from the checkpoint's.
void check_compatible(const Checkpoint& c, const graph::HetGraph& g);

}  // namespace mhnf::train
