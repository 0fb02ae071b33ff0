// Copyright 2026 The flk Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS-IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef FLK_CONFIG_HPP_
#define FLK_CONFIG_HPP_

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "flk/sha256.hpp"

namespace flk {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class RunMode { kSimulateSerial, kSimulateParallel, kServer, kClient };
enum class Aggregator { kFedAvg, kAsync };
enum class PartitionScheme { kIid, kDirichlet, kShards };
enum class TaskKind { kLogreg, kMlp };

struct DpConfig {
  bool enabled = false;
  double clip = 1.0;
  double epsilon = 1.0;
  double delta = 1e-5;
};

struct SecaggConfig {
  bool enabled = false;
  uint64_t fixed_point_scale = uint64_t{1} << 20;
};

struct PartitionConfig {
  PartitionScheme scheme = PartitionScheme::kIid;
  double dirichlet_alpha = 0.5;
  uint64_t shards_per_client = 2;
};

struct TaskConfig {
  TaskKind kind = TaskKind::kLogreg;
  uint64_t n_per_class = 100;
  uint64_t n_classes = 2;
  uint64_t feature_dim = 10;
  double class_sep = 4.0;
  uint64_t hidden_units = 16;  // mlp only; ignored by logreg
};

struct CommConfig {
  std::string host = "127.0.0.1";
  uint16_t port = 7070;
  std::string auth_token;
  bool serialize_inproc = false;
};

struct TimingConfig {
  double round_timeout_sec = 0.0;  // 0 = wait forever
  int64_t quorum = -1;             // -1 = "all"
  double ema_beta = 0.5;
};

struct CostConfig {
  std::vector<double> price_per_sec;   // resolved to one entry per client
  std::vector<double> base_round_sec;  // resolved to one entry per client
  double per_sample_sec = 0.0;
  double spin_up_time_sec = 0.0;
  double shutdown_threshold_sec = 0.0;
};

struct HooksConfig {
  bool eval_local = true;
  bool cost_shutdown = true;  // effective only when a cost block is present
  bool strict = false;
};

struct ExperimentConfig {
  RunMode mode = RunMode::kSimulateSerial;
  uint64_t seed = 0;
  uint32_t rounds = 1;
  uint32_t clients = 1;
  double client_fraction = 1.0;
  uint32_t local_epochs = 1;
  uint32_t batch_size = 32;
  double learning_rate = 0.1;
  double prox_mu = 0.0;
  Aggregator aggregator = Aggregator::kFedAvg;
  double async_alpha = 0.5;
  double staleness_exponent = 0.5;
  uint32_t async_budget = 10;
  DpConfig dp;
  SecaggConfig secagg;
  PartitionConfig partition;
  TaskConfig task;
  CommConfig comm;
  TimingConfig timing;
  std::optional<CostConfig> cost;
  HooksConfig hooks;

  // Number of updates that closes a round of `selected` participants.
  size_t quorum_size(size_t selected) const;
  bool cost_model_enabled() const { return cost.has_value(); }
};

// Strict parse of a JSON document: unknown keys are errors, every field is
// range checked, defaults are resolved. Throws ConfigError.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config_file(const std::string& path);

// Canonical serialization of the resolved experiment: keys sorted by code
// point, shortest round-trip numbers, no whitespace. `mode` is excluded on
// purpose: the digest identifies the experiment, not the vehicle running it,
// and server and client processes must agree on it.
std::string canonical_json(const ExperimentConfig& c);
Sha256Digest config_digest(const ExperimentConfig& c);

const char* to_string(RunMode m);
const char* to_string(Aggregator a);
const char* to_string(PartitionScheme s);
const char* to_string(TaskKind k);

}  // namespace flk

#endif  // FLK_CONFIG_HPP_
